#include "pnp/cli.hpp"

#include <CLI11.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <variant>

#include "pnp/denoisers.hpp"
#include "pnp/image_io.hpp"
#include "pnp/restoration.hpp"
#include "pnp/solvers.hpp"
#include "pnp/theory.hpp"

namespace pnp::cli {

namespace {

using Field = std::variant<std::string RunConfig::*, bool RunConfig::*, int RunConfig::*, double RunConfig::*,
                           std::uint64_t RunConfig::*>;

struct Entry {
  const char* key;
  Field field;
};

const Entry kEntries[] = {
    {"task", &RunConfig::task},
    {"input", &RunConfig::input},
    {"output", &RunConfig::output},
    {"solver", &RunConfig::solver},
    {"scaled", &RunConfig::scaled},
    {"denoiser", &RunConfig::denoiser},
    {"rho", &RunConfig::rho},
    {"max_iter", &RunConfig::max_iter},
    {"tolerance", &RunConfig::tolerance},
    {"freeze_after", &RunConfig::freeze_after},
    {"momentum", &RunConfig::momentum},
    {"momentum_a", &RunConfig::momentum_a},
    {"patch_radius", &RunConfig::patch_radius},
    {"window_radius", &RunConfig::window_radius},
    {"nlm_h", &RunConfig::nlm_h},
    {"sinkhorn_iters", &RunConfig::sinkhorn_iters},
    {"filter_size", &RunConfig::filter_size},
    {"filter_variance", &RunConfig::filter_variance},
    {"psf", &RunConfig::psf},
    {"psf_size", &RunConfig::psf_size},
    {"psf_variance", &RunConfig::psf_variance},
    {"psf_file", &RunConfig::psf_file},
    {"keep_fraction", &RunConfig::keep_fraction},
    {"sigma_w", &RunConfig::sigma_w},
    {"seed", &RunConfig::seed},
    {"median_window", &RunConfig::median_window},
    {"synthetic_size", &RunConfig::synthetic_size},
    {"verify_size", &RunConfig::verify_size},
    {"trials", &RunConfig::trials},
    {"timing", &RunConfig::timing},
};

const Entry& find_entry(std::string_view key) {
  for (const auto& e : kEntries) {
    if (e.key == key) return e;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected a boolean, got '" + std::string(text) + "'");
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf.data(), end);
}

template <typename... T>
struct Overloaded : T... {
  using T::operator()...;
};
template <typename... T>
Overloaded(T...) -> Overloaded<T...>;

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

bool one_of(const std::string& value, std::initializer_list<std::string_view> options) {
  for (auto o : options) {
    if (value == o) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------

denoisers::NlmParams nlm_params(const RunConfig& c) {
  return {c.patch_radius, c.window_radius, c.nlm_h};
}

std::unique_ptr<denoisers::DenoiserSchedule> make_schedule(const RunConfig& c, Index height, Index width) {
  const auto params = nlm_params(c);
  if (c.denoiser == "box") {
    return std::make_unique<denoisers::FixedDenoiser>(denoisers::box_filter(height, width, c.filter_size));
  }
  if (c.denoiser == "gaussian") {
    return std::make_unique<denoisers::FixedDenoiser>(
        denoisers::gaussian_filter(height, width, c.filter_size, c.filter_variance));
  }
  denoisers::FrozenDenoiser::Builder builder;
  if (c.denoiser == "nlm") {
    builder = [params](const Image& g) -> denoisers::DenoiserPtr { return denoisers::build_nlm(g, params); };
  } else if (c.denoiser == "dsg-nlm") {
    const int iters = c.sinkhorn_iters;
    builder = [params, iters](const Image& g) -> denoisers::DenoiserPtr {
      return denoisers::build_dsg_nlm(g, params, iters);
    };
  } else {
    builder = [params](const Image& g) -> denoisers::DenoiserPtr {
      return std::make_shared<denoisers::TwoWMinusWSquared>(denoisers::build_nlm(g, params));
    };
  }
  int freeze = c.freeze_after;
  if (freeze == 0) freeze = c.solver == "admm" ? denoisers::kAdmmFreezeAfter : denoisers::kFistaFreezeAfter;
  return std::make_unique<denoisers::FrozenDenoiser>(std::move(builder), height, width, freeze);
}

restoration::Psf make_psf(const RunConfig& c) {
  if (c.psf == "box") return restoration::Psf::box(c.psf_size);
  if (c.psf == "gaussian") return restoration::Psf::gaussian(c.psf_variance, c.psf_size);
  if (c.psf == "motion") return restoration::Psf::motion(c.psf_size);
  if (c.psf == "delta") return restoration::Psf::delta();
  return restoration::Psf::custom(io::read_image(c.psf_file));
}

Image load_ground_truth(const RunConfig& c) {
  if (c.input == "synthetic") return restoration::synthetic_scene(c.synthetic_size, c.synthetic_size);
  return restoration::clamp01(io::read_image(c.input));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io::ImageIoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw io::ImageIoError("failed writing '" + path.string() + "'");
}

void write_diagnostics(const solvers::Diagnostics& d, const RunConfig& c, std::ostream& log) {
  std::ostringstream csv;
  solvers::write_csv(d, csv, c.timing);
  write_text(std::filesystem::path(c.output) / "diagnostics.csv", csv.str());
  for (const auto& w : d.warnings) log << "warning: " << w << '\n';
}

int run_restoration(const RunConfig& c, std::ostream& log) {
  const Image gt = load_ground_truth(c);
  const auto problem = c.task == "inpaint" ? restoration::make_inpainting(gt, c.keep_fraction, c.sigma_w, c.seed)
                                           : restoration::make_deblurring(gt, make_psf(c), c.sigma_w, c.seed);
  const std::filesystem::path out_dir(c.output);
  const Image degraded = restoration::degraded_image(problem);
  io::write_pgm(degraded, out_dir / "degraded.pgm");
  const Image init = restoration::initial_estimate(problem, c.median_window);

  const proximal::QuadraticLoss loss(problem.op, problem.b);
  auto schedule = make_schedule(c, gt.height, gt.width);
  const auto quality = [&gt](const Vector& x) { return restoration::psnr(x, gt.pixels); };

  Vector restored;
  solvers::Diagnostics diagnostics;
  if (c.solver == "admm") {
    solvers::AdmmOptions opts;
    opts.rho = c.rho > 0.0 ? c.rho : 1.0;
    opts.max_iter = c.max_iter;
    opts.tolerance = c.tolerance;
    opts.quality = quality;
    const Vector nu = Vector::Zero(init.size());
    auto result = c.scaled ? solvers::scaled_pnp_admm(loss, *schedule, init.pixels, nu, opts)
                           : solvers::standard_pnp_admm(loss, *schedule, init.pixels, nu, opts);
    restored = std::move(result.z);
    diagnostics = std::move(result.diagnostics);
  } else {
    solvers::FistaOptions opts;
    if (c.rho > 0.0) opts.rho = c.rho;
    opts.schedule = c.momentum == "chambolle" ? solvers::MomentumSchedule::chambolle(c.momentum_a)
                                              : solvers::MomentumSchedule::classical();
    opts.max_iter = c.max_iter;
    opts.tolerance = c.tolerance;
    opts.quality = quality;
    auto result = c.scaled ? solvers::scaled_pnp_fista(loss, *schedule, init.pixels, opts)
                           : solvers::standard_pnp_fista(loss, *schedule, init.pixels, opts);
    restored = std::move(result.solution);
    diagnostics = std::move(result.diagnostics);
  }

  const Image out(gt.height, gt.width, restored);
  io::write_pgm(out, out_dir / "restored.pgm");
  write_diagnostics(diagnostics, c, log);
  const auto& last = diagnostics.records.back();
  log << "iterations " << last.k << '\n'
      << "final residual " << format_double(last.residual) << '\n'
      << "psnr degraded " << format_double(restoration::psnr(degraded, gt)) << " dB\n"
      << "psnr initial " << format_double(restoration::psnr(init, gt)) << " dB\n"
      << "psnr restored " << format_double(restoration::psnr(restoration::clamp01(out), gt)) << " dB\n";
  return kOk;
}

struct VerifyLine {
  std::string name;
  bool pass;
  std::string detail;
};

DenseMatrix random_kernel_denoiser(int n, std::uint64_t seed, Vector& row_sums) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  DenseMatrix features(n, 2);
  for (int i = 0; i < n; ++i) features.row(i) << uniform(rng), uniform(rng);
  DenseMatrix k(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) k(i, j) = std::exp(-(features.row(i) - features.row(j)).squaredNorm() / 0.25);
  }
  row_sums = k.rowwise().sum();
  return row_sums.cwiseInverse().asDiagonal() * k;
}

int run_verify(const RunConfig& c, std::ostream& log) {
  Vector d;
  const DenseMatrix w = random_kernel_denoiser(c.verify_size, c.seed, d);
  std::vector<VerifyLine> lines;

  auto certification = theory::certify_proximable(w);
  if (auto* refusal = std::get_if<theory::Refusal>(&certification)) {
    lines.push_back({"certify_proximable", false, refusal->detail});
  } else {
    const auto& cert = std::get<theory::ProximableCertificate>(certification);
    lines.push_back({"certify_proximable", true, "rank " + std::to_string(cert.rank)});

    const Vector recovered = *cert.metric.diagonal();
    const double scale_err = ((recovered / recovered[0]) - (d / d[0])).cwiseAbs().maxCoeff();
    lines.push_back({"recovered_scaling_matches_row_sums", scale_err <= 1e-12, format_double(scale_err)});

    const auto prox = theory::verify_scaled_prox(w, cert, c.trials, c.seed);
    lines.push_back({"scaled_prox_equals_denoiser", prox.pass, format_double(prox.max_error)});

    const auto moreau = theory::moreau_check(w, cert.metric, c.trials, c.seed);
    lines.push_back({"moreau_conditions", moreau.pass(),
                     "ratio " + format_double(moreau.max_ratio) + " min_eig " + format_double(moreau.min_eigenvalue)});

    std::mt19937_64 rng(c.seed + 1);
    std::normal_distribution<double> normal;
    double worst = 0.0;
    for (int t = 0; t < c.trials; ++t) {
      Vector q(w.rows());
      for (Index i = 0; i < q.size(); ++i) q[i] = normal(rng);
      const Vector u = w * q;
      const double fast = theory::eval_phi_fast(cert.metric, u, q);
      const double direct = theory::eval_phi_direct(cert, u);
      worst = std::max(worst, std::abs(fast - direct) / std::max({std::abs(fast), std::abs(direct), 1e-300}));
    }
    lines.push_back({"objective_identity", worst <= 1e-9, format_double(worst)});

    bool scale_ok = true;
    for (double s : {0.5, 2.0}) {
      const auto scaled = theory::certify_proximable(w, cert.metric.scaled(s));
      const auto* sc = std::get_if<theory::ProximableCertificate>(&scaled);
      scale_ok = scale_ok && sc != nullptr && theory::verify_scaled_prox(w, *sc, c.trials, c.seed).pass;
    }
    lines.push_back({"scale_freedom", scale_ok, "c in {0.5, 2}"});
  }

  std::ostringstream report;
  bool all = true;
  for (const auto& l : lines) {
    report << (l.pass ? "PASS " : "FAIL ") << l.name << " (" << l.detail << ")\n";
    all = all && l.pass;
  }
  log << report.str();
  write_text(std::filesystem::path(c.output) / "verify.txt", report.str());
  return all ? kOk : kInvalid;
}

int run_counterexample_task(const RunConfig& c, std::ostream& log) {
  const auto report = theory::run_counterexample(std::max(1000, c.max_iter));
  std::ostringstream csv;
  theory::write_counterexample_csv(report, csv);
  write_text(std::filesystem::path(c.output) / "counterexample.csv", csv.str());
  log << "log_residual is the natural log of ||x_k - z_k||_2\n"
      << "dominant eigenvalue of R S^T " << format_double(report.dominant_eigenvalue) << '\n'
      << "recursion vs solver max relative mismatch " << format_double(report.max_solver_mismatch) << '\n'
      << "scaled ADMM residual at k=" << report.rows.size() << ' ' << format_double(report.scaled_residual) << '\n';
  for (int k : {1, 200, 400, 600, 800, 1000}) {
    log << "k=" << k << " log_residual=" << format_double(report.rows[static_cast<std::size_t>(k - 1)].log_residual)
        << '\n';
  }
  return kOk;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& e : kEntries) out.emplace_back(e.key);
    return out;
  }();
  return keys;
}

void set_value(RunConfig& config, std::string_view key, std::string_view raw) {
  const Entry& entry = find_entry(key);
  const std::string_view value = trim(raw);
  std::visit(Overloaded{
                 [&](std::string RunConfig::*f) { config.*f = std::string(value); },
                 [&](bool RunConfig::*f) { config.*f = parse_bool(key, value); },
                 [&](int RunConfig::*f) { config.*f = parse_number<int>(key, value); },
                 [&](double RunConfig::*f) { config.*f = parse_number<double>(key, value); },
                 [&](std::uint64_t RunConfig::*f) { config.*f = parse_number<std::uint64_t>(key, value); },
             },
             entry.field);
}

std::string get_value(const RunConfig& config, std::string_view key) {
  const Entry& entry = find_entry(key);
  return std::visit(Overloaded{
                        [&](std::string RunConfig::*f) { return config.*f; },
                        [&](bool RunConfig::*f) { return std::string(config.*f ? "true" : "false"); },
                        [&](int RunConfig::*f) { return std::to_string(config.*f); },
                        [&](double RunConfig::*f) { return format_double(config.*f); },
                        [&](std::uint64_t RunConfig::*f) { return std::to_string(config.*f); },
                    },
                    entry.field);
}

void apply_config_text(RunConfig& config, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    set_value(config, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(config, text.str());
}

void validate(const RunConfig& c) {
  require(one_of(c.task, {"inpaint", "deblur", "verify", "counterexample"}),
          "task must be inpaint, deblur, verify or counterexample");
  require(!c.output.empty(), "output directory is required");
  require(one_of(c.solver, {"admm", "fista"}), "solver must be admm or fista");
  require(one_of(c.denoiser, {"nlm", "dsg-nlm", "2w-w2", "box", "gaussian"}),
          "denoiser must be nlm, dsg-nlm, 2w-w2, box or gaussian");
  require(one_of(c.momentum, {"classical", "chambolle"}), "momentum must be classical or chambolle");
  require(one_of(c.psf, {"box", "gaussian", "motion", "delta", "file"}),
          "psf must be box, gaussian, motion, delta or file");
  require(c.rho >= 0.0 && std::isfinite(c.rho), "rho must be >= 0 (0 selects the default)");
  require(c.max_iter >= 1, "max_iter must be >= 1");
  require(c.tolerance >= 0.0, "tolerance must be >= 0");
  require(c.freeze_after >= 0, "freeze_after must be >= 0 (0 selects the default)");
  require(c.momentum_a > 2.0, "momentum_a must be > 2");
  require(c.patch_radius >= 0, "patch_radius must be >= 0");
  require(c.window_radius >= c.patch_radius, "window_radius must be >= patch_radius");
  require(c.nlm_h > 0.0, "nlm_h must be positive");
  require(c.sinkhorn_iters >= 1, "sinkhorn_iters must be >= 1");
  require(c.filter_size >= 1 && c.filter_size % 2 == 1, "filter_size must be odd and positive");
  require(c.filter_variance > 0.0, "filter_variance must be positive");
  require(c.psf_size >= 0 && (c.psf_size == 0 || c.psf_size % 2 == 1), "psf_size must be odd (0: automatic)");
  require(c.psf != "file" || !c.psf_file.empty(), "psf = file needs psf_file");
  require(c.psf_size > 0 || c.psf == "gaussian" || c.psf == "delta" || c.psf == "file",
          "psf_size 0 is only allowed for the gaussian PSF");
  require(c.psf_variance > 0.0, "psf_variance must be positive");
  require(c.keep_fraction > 0.0 && c.keep_fraction < 1.0, "keep_fraction must lie in (0, 1)");
  require(c.sigma_w >= 0.0 && c.sigma_w <= 1.0, "sigma_w must lie in [0, 1]");
  require(c.median_window >= 1 && c.median_window % 2 == 1, "median_window must be odd and positive");
  require(c.synthetic_size >= 8, "synthetic_size must be >= 8");
  require(c.verify_size >= 2 && c.verify_size <= 64, "verify_size must lie in [2, 64]");
  require(c.trials >= 1, "trials must be >= 1");
  if (c.task == "inpaint" || c.task == "deblur") require(!c.input.empty(), "input image is required (or 'synthetic')");
}

std::string manifest(const RunConfig& config) {
  std::string out = "# resolved run configuration\n";
  for (const auto& key : config_keys()) out += key + " = " + get_value(config, key) + '\n';
  return out;
}

int run(const RunConfig& config, std::ostream& log) {
  try {
    validate(config);
    std::filesystem::create_directories(config.output);
    write_text(std::filesystem::path(config.output) / "manifest.txt", manifest(config));
    if (config.task == "verify") return run_verify(config, log);
    if (config.task == "counterexample") return run_counterexample_task(config, log);
    return run_restoration(config, log);
  } catch (const SolverAbort& e) {
    log << "solver aborted: " << e.what() << '\n';
    return kSolverAbort;
  } catch (const ConvergenceError& e) {
    log << "solver aborted: " << e.what() << '\n';
    return kSolverAbort;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kInvalid;
  }
}

int main_entry(int argc, const char* const* argv) {
  CLI::App app{"Plug-and-play restoration with linear denoisers as scaled proximal maps"};
  std::string config_file;
  app.add_option("-c,--config", config_file, "key = value config file (flags override it)");
  std::vector<std::string> raw(config_keys().size());
  std::vector<CLI::Option*> options;
  for (std::size_t i = 0; i < config_keys().size(); ++i) {
    std::string flag = config_keys()[i];
    std::replace(flag.begin(), flag.end(), '_', '-');
    options.push_back(app.add_option("--" + flag, raw[i], "config key " + config_keys()[i]));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  RunConfig config;
  try {
    if (!config_file.empty()) apply_config_file(config, config_file);
    for (std::size_t i = 0; i < options.size(); ++i) {
      if (options[i]->count() > 0) set_value(config, config_keys()[i], raw[i]);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return run(config, std::cout);
}

}  // namespace pnp::cli
