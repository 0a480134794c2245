#pragma once

// Command-line front end: gen-data, train, finetune, eval, infer, s2r-exp, plot.
//
// Exit codes: 0 success, 1 unexpected failure, 2 usage/config error,
// 3 file or format error, 4 numeric failure during training.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "inbed/config.hpp"
#include "inbed/eval.hpp"

namespace inbed {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitNumeric = 4;

inline constexpr const char* kOutputRootEnv = "INBED_OUTPUT_ROOT";

class UsageError : public std::runtime_error {
 public:
  UsageError(const std::string& msg, int code) : std::runtime_error(msg), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

struct RunConfig {
  std::string command;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;               // --out; empty = env var, then run.output_dir
  std::optional<std::int64_t> seed;     // --seed shadows run.seed
  std::string data;                     // dataset input
  std::string checkpoint;               // eval / infer input, finetune init
  std::string resume;                   // partially trained checkpoint to continue
  std::string table;                    // plot input
  std::optional<double> fraction;       // finetune subset
  bool scratch = false;                 // finetune without pretrained weights
  int index = 0;                        // infer: sample index
  int stop_at = -1;                     // train/finetune: stop early at this step
};

// Throws UsageError (code 2 on bad input, 0 after printing help).
RunConfig parse_args(int argc, const char* const* argv, std::ostream& out);

// Resolved configuration: defaults < file < overrides < dedicated flags.
Config resolve_config(const RunConfig& rc);
std::filesystem::path output_root(const RunConfig& rc, const Config& cfg);

// Domain objects built from a resolved configuration.
SceneConfig scene_from(const Config& c);
TemplateSource templates_from(const Config& c);
DenoiserConfig model_from(const Config& c);
TrainConfig synthetic_from(const Config& c);
TrainConfig finetune_from(const Config& c);
TrainConfig scratch_from(const Config& c);
GenerationConfig generation_from(const Config& c, const std::string& split);  // synthetic | real_train | real_test
S2RConfig experiment_from(const Config& c);

// Executes a parsed command; never throws.
int run(const RunConfig& rc, std::ostream& out, std::ostream& err);

// parse_args + run with exit-code mapping.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Criterion summary of an experiment table (medians over seeds).
nlohmann::json experiment_summary(const S2RResult& res);

}  // namespace inbed
