#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "inbed/cli.hpp"

using namespace inbed;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "inbed");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string smoke() { return (fs::path(INBED_SOURCE_DIR) / "configs" / "smoke.toml").string(); }

// Every artifact except the timing logs, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).generic_string();
    if (rel.rfind("logs/", 0) == 0) continue;
    files[rel] = fixture::file_bytes(e.path());
  }
  return files;
}

void pipeline(const fs::path& root) {
  const std::string out = root.string();
  for (std::vector<std::string> cmd : {std::vector<std::string>{"gen-data"},
                                       {"train"},
                                       {"finetune"},
                                       {"finetune", "--scratch", "--fraction", "0.5"},
                                       {"eval"},
                                       {"eval", "--checkpoint", out + "/checkpoints/scratch.ckpt"},
                                       {"infer", "--index", "2"},
                                       {"s2r-exp"},
                                       {"plot"}}) {
    cmd.insert(cmd.end(), {"-c", smoke(), "-o", out});
    const Outcome r = cli(cmd);
    INFO(cmd[0], " stderr: ", r.err);
    REQUIRE(r.code == 0);
  }
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("argument parsing") {
    const char* argv[] = {"inbed", "gen-data", "--config", INBED_SOURCE_DIR "/configs/base.toml", "--seed", "7",
                          "data.n_synthetic=10", "--set", "eval.seed=3"};
    std::ostringstream sink;
    const RunConfig rc = parse_args(9, argv, sink);
    CHECK(rc.command == "gen-data");
    CHECK(rc.seed == std::optional<std::int64_t>(7));
    CHECK(rc.overrides.size() == 2);
    const Config c = resolve_config(rc);
    CHECK(c.get_int("run.seed") == 7);
    CHECK(c.get_int("data.n_synthetic") == 10);
    CHECK(c.get_int("eval.seed") == 3);
    CHECK(c.get_string("run.output_dir") == "runs/base");

    const char* ft[] = {"inbed", "finetune", "--fraction", "0.25", "--scratch", "--stop-at", "4"};
    const RunConfig f = parse_args(7, ft, sink);
    CHECK(f.scratch);
    CHECK(f.stop_at == 4);
    CHECK(resolve_config(f).get_real("finetune.fraction") == 0.25);
  }

  TEST_CASE("output root precedence") {
    RunConfig rc;
    Config c;
    c.apply_override("run.output_dir=from_config");
    ::unsetenv(kOutputRootEnv);
    CHECK(output_root(rc, c) == fs::path("from_config"));
    ::setenv(kOutputRootEnv, "from_env", 1);
    CHECK(output_root(rc, c) == fs::path("from_env"));
    rc.output_dir = "from_flag";
    CHECK(output_root(rc, c) == fs::path("from_flag"));
    ::unsetenv(kOutputRootEnv);
  }

  TEST_CASE("usage errors and help") {
    CHECK(cli({}).code == kExitConfig);
    CHECK(cli({"frobnicate"}).code == kExitConfig);
    CHECK(cli({"train", "--no-such-flag"}).code == kExitConfig);
    CHECK(cli({"train", "-c", "/nonexistent.toml"}).code == kExitConfig);
    CHECK(cli({"train", "bogus.key=1"}).code == kExitConfig);
    CHECK(cli({"train", "train.steps_total=lots"}).code == kExitConfig);
    const Outcome help = cli({"train", "--help"});
    CHECK(help.code == kExitOk);
    for (const auto& k : config_schema()) CHECK(help.out.find(k.key) != std::string::npos);
    CHECK(help.out.find(kOutputRootEnv) != std::string::npos);
  }

  TEST_CASE("missing or unreadable inputs map to the IO exit code") {
    const fs::path dir = fixture::scratch_dir("cli_io");
    const Outcome r = cli({"eval", "-c", smoke(), "-o", dir.string(), "--checkpoint", (dir / "none.ckpt").string()});
    CHECK(r.code == kExitIo);
    CHECK(r.err.find("none.ckpt") != std::string::npos);
    { std::ofstream(dir / "junk.ckpt") << "not an archive"; }
    CHECK(cli({"eval", "-c", smoke(), "-o", dir.string(), "--checkpoint", (dir / "junk.ckpt").string()}).code ==
          kExitIo);
    CHECK(cli({"plot", "-o", dir.string()}).code == kExitIo);
  }

  TEST_CASE("pipeline reruns are byte-identical") {
    const fs::path a = fixture::scratch_dir("cli_a"), b = fixture::scratch_dir("cli_b");
    pipeline(a);
    pipeline(b);
    const auto sa = snapshot(a), sb = snapshot(b);
    for (const char* f : {"data/synthetic.ds", "checkpoints/synthetic.ckpt", "checkpoints/finetune.ckpt",
                          "checkpoints/scratch.ckpt", "reports/eval_finetune.json", "infer/sample_2.obj",
                          "experiment/table.tsv", "experiment/mpjpe.svg", "plots/table_mpjpe.svg",
                          "manifest_s2r-exp.json"})
      CHECK_MESSAGE(sa.count(f) == 1, f);
    CHECK(sa.size() == sb.size());
    for (const auto& [k, v] : sa) CHECK_MESSAGE((sb.count(k) && sb.at(k) == v), k);

    const auto manifest = nlohmann::json::parse(sa.at("manifest_train.json"));
    CHECK(manifest.at("command") == "train");
    CHECK(manifest.at("artifacts").contains("checkpoints/synthetic.ckpt"));
    CHECK(manifest.at("seeds").at("run") == 0);

    // A different seed changes the data.
    const fs::path c = fixture::scratch_dir("cli_c");
    REQUIRE(cli({"gen-data", "-c", smoke(), "-o", c.string(), "--seed", "1"}).code == 0);
    CHECK(fixture::file_bytes(c / "data/synthetic.ds") != sa.at("data/synthetic.ds"));
  }

  TEST_CASE("interrupted training resumes to the same checkpoint") {
    const fs::path d = fixture::scratch_dir("cli_resume");
    const std::string out = d.string();
    REQUIRE(cli({"gen-data", "-c", smoke(), "-o", out}).code == 0);
    REQUIRE(cli({"train", "-c", smoke(), "-o", out}).code == 0);
    const std::string full = fixture::file_bytes(d / "checkpoints/synthetic.ckpt");
    REQUIRE(cli({"train", "-c", smoke(), "-o", out, "--stop-at", "3"}).code == 0);
    CHECK(fixture::file_bytes(d / "checkpoints/synthetic.ckpt") != full);
    fs::copy_file(d / "checkpoints/synthetic.ckpt", d / "partial.ckpt");
    REQUIRE(cli({"train", "-c", smoke(), "-o", out, "--resume", (d / "partial.ckpt").string()}).code == 0);
    CHECK(fixture::file_bytes(d / "checkpoints/synthetic.ckpt") == full);
    CHECK(cli({"train", "-c", smoke(), "-o", out, "--resume", (d / "partial.ckpt").string(), "train.lr_init=0.5"})
              .code == kExitConfig);
  }

  TEST_CASE("installed binary exit codes") {
    auto status = [](const std::string& args) {
      const int s = std::system((std::string("\"") + INBED_CLI + "\" " + args + " >/dev/null 2>&1").c_str());
      return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    CHECK(status("--help") == 0);
    CHECK(status("nope") == 2);
    CHECK(status("eval --checkpoint /nonexistent/x.ckpt --data /nonexistent/y.ds") == 3);
  }
}
