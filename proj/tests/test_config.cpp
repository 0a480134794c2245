#include "doctest.h"
#include "fixtures.hpp"
#include "inbed/archive.hpp"
#include "inbed/config.hpp"

using namespace inbed;

TEST_SUITE("config") {
  TEST_CASE("defaults come from the schema") {
    const Config c;
    CHECK(c.get_int("diffusion.T") == 100);
    CHECK(c.get_real("diffusion.beta_end") == 0.2);
    CHECK(c.get_int_list("experiment.seeds") == std::vector<std::int64_t>{0, 1, 2});
    CHECK(c.get_real_list("experiment.fractions") == std::vector<double>{0.1, 0.25, 0.5, 1.0});
    CHECK(c.get_string("body.template") == "toy");
    CHECK_FALSE(c.get_bool("model.include_gender"));
  }

  TEST_CASE("file text then overrides") {
    Config c;
    c.merge_text(R"(
# comment
[train]
lr_init = 0.002   # trailing comment
steps_total = 40
[run]
output_dir = "out # not a comment"
[experiment]
seeds = [4, 5]
fractions = []
)", "mem");
    CHECK(c.get_real("train.lr_init") == 0.002);
    CHECK(c.get_int("train.steps_total") == 40);
    CHECK(c.get_string("run.output_dir") == "out # not a comment");
    CHECK(c.get_int_list("experiment.seeds") == std::vector<std::int64_t>{4, 5});
    CHECK(c.get_real_list("experiment.fractions").empty());
    c.apply_override("train.steps_total=7");
    c.apply_override("run.output_dir=elsewhere");
    CHECK(c.get_int("train.steps_total") == 7);
    CHECK(c.get_string("run.output_dir") == "elsewhere");
  }

  TEST_CASE("errors name the problem") {
    Config c;
    CHECK_THROWS_AS(c.merge_text("[train]\nlr = 1\n", "mem"), ConfigError);
    CHECK_THROWS_AS(c.merge_text("[train]\nsteps_total = 1.5\n", "mem"), ConfigError);
    CHECK_THROWS_AS(c.merge_text("[train\n", "mem"), ConfigError);
    CHECK_THROWS_AS(c.merge_text("justtext\n", "mem"), ConfigError);
    CHECK_THROWS_AS(c.apply_override("noequals"), ConfigError);
    CHECK_THROWS_AS(c.apply_override("model.include_gender=yes"), ConfigError);
    CHECK_THROWS_AS(c.apply_override("experiment.seeds=[1, x]"), ConfigError);
    CHECK_THROWS_AS(c.get_int("train.lr_init"), ConfigError);
    CHECK_THROWS_AS(c.merge_file("/nonexistent/inbed.toml"), io::IoError);
    try {
      c.merge_text("\n\n[data]\nn_synthetic = many\n", "cfg.toml");
      FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("cfg.toml:4") != std::string::npos);
    }
  }

  TEST_CASE("canonical text and digest") {
    Config a, b;
    CHECK(a.digest() == b.digest());
    b.apply_override("eval.seed=1");
    CHECK(a.digest() != b.digest());
    b.apply_override("eval.seed=0");
    CHECK(a.canonical() == b.canonical());
    CHECK(a.to_json().size() == config_schema().size());
    CHECK(schema_help().find("shift.sag") != std::string::npos);
  }

  TEST_CASE("shipped config files parse") {
    for (const char* name : {"base.toml", "toy.toml", "smoke.toml"}) {
      Config c;
      CHECK_NOTHROW(c.merge_file(std::filesystem::path(INBED_SOURCE_DIR) / "configs" / name));
    }
    Config base;
    base.merge_file(std::filesystem::path(INBED_SOURCE_DIR) / "configs" / "base.toml");
    Config def;
    def.apply_override("run.output_dir=runs/base");
    CHECK(base.canonical() == def.canonical());
  }
}
