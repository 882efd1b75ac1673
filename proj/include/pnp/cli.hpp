#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pnp::cli {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum ExitCode : int { kOk = 0, kInvalid = 1, kSolverAbort = 2 };

/// Fully resolved run description. Every field has a key of the same name in
/// the config file and a --key flag (underscores become dashes).
struct RunConfig {
  std::string task = "inpaint";  // inpaint | deblur | verify | counterexample
  std::string input;             // image path, or "synthetic"
  std::string output;            // output directory
  std::string solver = "admm";   // admm | fista
  bool scaled = true;
  std::string denoiser = "nlm";  // nlm | dsg-nlm | 2w-w2 | box | gaussian
  double rho = 0.0;              // 0: ADMM uses 1, FISTA the smoothness constant
  int max_iter = 100;
  double tolerance = 0.0;
  int freeze_after = 0;          // 0: 1 for ADMM, 5 for FISTA
  std::string momentum = "classical";  // classical | chambolle
  double momentum_a = 3.0;
  int patch_radius = 3;
  int window_radius = 5;
  double nlm_h = 0.4;
  int sinkhorn_iters = 20;
  int filter_size = 5;
  double filter_variance = 1.0;
  std::string psf = "motion";    // box | gaussian | motion | delta | file
  int psf_size = 11;
  double psf_variance = 4.0;
  std::string psf_file;
  double keep_fraction = 0.5;
  double sigma_w = 20.0 / 255.0;
  std::uint64_t seed = 0;
  int median_window = 3;
  int synthetic_size = 64;
  int verify_size = 8;
  int trials = 100;
  bool timing = true;
};

/// All config keys in manifest order.
const std::vector<std::string>& config_keys();

/// Sets one field from its textual value. Throws ConfigError on unknown keys
/// or unparsable values.
void set_value(RunConfig& config, std::string_view key, std::string_view value);

std::string get_value(const RunConfig& config, std::string_view key);

/// Flat "key = value" lines; '#' starts a comment.
void apply_config_text(RunConfig& config, std::string_view text);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// Range checks; throws ConfigError.
void validate(const RunConfig& config);

/// The resolved config in config-file syntax; feeding it back reproduces the run.
std::string manifest(const RunConfig& config);

/// Runs a validated config, writing artifacts into config.output.
/// Returns an ExitCode; progress and summaries go to `log`.
int run(const RunConfig& config, std::ostream& log);

/// Command-line front end.
int main_entry(int argc, const char* const* argv);

}  // namespace pnp::cli
