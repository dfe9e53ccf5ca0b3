#include "lpn/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "lpn/config.hpp"
#include "lpn/csv.hpp"
#include "lpn/operators.hpp"

namespace lpn {

using nlohmann::json;

double soft_threshold(double x, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("soft_threshold: lambda must be positive");
  const double mag = std::max(std::abs(x) - lambda, 0.0);
  return x < 0.0 ? -mag : mag;
}

double laplace_posterior_mean(double y, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("laplace_posterior_mean: sigma must be positive");
  if (!std::isfinite(y)) throw std::invalid_argument("laplace_posterior_mean: y must be finite");
  const double s2 = sigma * sigma;
  // Posterior mode, used to shift the log-density so its maximum is 0.
  const double mode = y > s2 ? y - s2 : (y < -s2 ? y + s2 : 0.0);
  const double log_peak = -std::abs(mode) - (y - mode) * (y - mode) / (2.0 * s2);
  const auto density = [&](double x) { return std::exp(-std::abs(x) - (y - x) * (y - x) / (2.0 * s2) - log_peak); };

  // The posterior is log-concave with curvature >= 1/sigma^2, so beyond
  // 12 sigma from the mode the tail mass is below exp(-72).
  const double half = 12.0 * sigma;
  std::vector<double> cuts{mode - half, mode + half};
  for (double c : {0.0, mode})
    if (c > cuts.front() && c < cuts.back()) cuts.push_back(c);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  using Quadrature = boost::math::quadrature::gauss_kronrod<double, 61>;
  const auto integrate = [&](const auto& g, double a, double b) {
    double error = 0.0;  // relative to the L1 norm of g on [a, b]
    const double v = Quadrature::integrate(g, a, b, 15, 1e-12, &error);
    if (!std::isfinite(v) || error > 1e-8)
      throw QuadratureError("laplace_posterior_mean: quadrature did not converge");
    return v;
  };
  double mass = 0.0;
  double moment = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    mass += integrate(density, cuts[i], cuts[i + 1]);
    moment += integrate([&](double x) { return x * density(x); }, cuts[i], cuts[i + 1]);
  }
  if (!(mass > 0.0)) throw QuadratureError("laplace_posterior_mean: zero posterior mass");
  return moment / mass;
}

double psnr(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat, double peak) {
  if (x.size() != x_hat.size()) throw std::invalid_argument("psnr: dimension mismatch");
  if (x.size() == 0) throw std::invalid_argument("psnr: empty signal");
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
  const double mse = (x - x_hat).squaredNorm() / static_cast<double>(x.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

MetricReport metrics(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat, double peak) {
  MetricReport m;
  m.psnr = psnr(x, x_hat, peak);
  m.mse = (x - x_hat).squaredNorm() / static_cast<double>(x.size());
  m.sup_error = (x - x_hat).cwiseAbs().maxCoeff();
  m.peak = peak;
  return m;
}

std::string experiment_name(ExperimentName name) {
  switch (name) {
    case ExperimentName::laplacian: return "laplacian";
    case ExperimentName::prior_sweep: return "prior_sweep";
    case ExperimentName::deblur: return "deblur";
    case ExperimentName::compressed_sensing: return "compressed_sensing";
  }
  return "laplacian";
}

ExperimentName experiment_from_name(const std::string& name) {
  for (auto n : {ExperimentName::laplacian, ExperimentName::prior_sweep, ExperimentName::deblur,
                 ExperimentName::compressed_sensing})
    if (experiment_name(n) == name) return n;
  throw std::invalid_argument("unknown experiment '" + name + "'");
}

Eigen::VectorXd GridSpec::values() const {
  if (points < 1) throw std::invalid_argument("GridSpec: need at least one point");
  if (points == 1) return Eigen::VectorXd::Constant(1, lo);
  return Eigen::VectorXd::LinSpaced(points, lo, hi);
}

void ExperimentSpec::validate() const {
  arch.validate();
  train.validate();
  source.validate();
  if (source.dim != arch.input_dim) throw std::invalid_argument("ExperimentSpec: source dim != network input dim");
  if (checkpoint && !std::filesystem::exists(*checkpoint))
    throw std::invalid_argument("ExperimentSpec: checkpoint '" + checkpoint->string() + "' does not exist");
  if (grid.points < 1 || (grid.points > 1 && !(grid.hi > grid.lo)))
    throw std::invalid_argument("ExperimentSpec: grid must be nonempty with lo < hi");
  if (name == ExperimentName::prior_sweep && (noise_levels.empty() || lambdas.empty()))
    throw std::invalid_argument("ExperimentSpec: noise levels and lambdas must be nonempty");
  for (double l : lambdas)
    if (!(l >= 0.0 && l <= 1.0)) throw std::invalid_argument("ExperimentSpec: lambdas must lie in [0, 1]");
  for (double s : noise_levels)
    if (!(s >= 0.0)) throw std::invalid_argument("ExperimentSpec: noise levels must be >= 0");
  if (num_samples < 1) throw std::invalid_argument("ExperimentSpec: num_samples must be >= 1");
  if (!(measurement_noise >= 0.0)) throw std::invalid_argument("ExperimentSpec: measurement_noise must be >= 0");
  if (!(prior_band > 0.0)) throw std::invalid_argument("ExperimentSpec: prior_band must be positive");
  if ((name == ExperimentName::deblur || name == ExperimentName::compressed_sensing) && operator_spec.is_null())
    throw std::invalid_argument("ExperimentSpec: inverse problems need an operator");
}

DataSource smooth_signal_source(int dim, int components, double spread, std::uint64_t seed) {
  if (dim < 1 || components < 1) throw std::invalid_argument("smooth_signal_source: bad sizes");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> freq(1, 3);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> amp(0.2, 0.35);
  std::vector<Eigen::VectorXd> means;
  for (int c = 0; c < components; ++c) {
    const int f = freq(rng);
    const double p = phase(rng);
    const double a = amp(rng);
    Eigen::VectorXd m(dim);
    for (int i = 0; i < dim; ++i) m[i] = 0.5 + a * std::sin(2.0 * std::numbers::pi * f * i / dim + p);
    means.push_back(std::move(m));
  }
  return DataSource::gaussian_mixture(std::move(means), std::vector<double>(components, spread),
                                      std::vector<double>(components, 1.0));
}

DataSource two_mode_source(int dim, double separation, double spread) {
  const double offset = separation / (2.0 * std::sqrt(static_cast<double>(dim)));
  std::vector<Eigen::VectorXd> means{Eigen::VectorXd::Constant(dim, 0.5 - offset),
                                     Eigen::VectorXd::Constant(dim, 0.5 + offset)};
  return DataSource::gaussian_mixture(std::move(means), {spread, spread}, {1.0, 1.0});
}

ExperimentSpec ExperimentSpec::defaults(ExperimentName name, std::uint64_t seed) {
  ExperimentSpec s;
  s.name = name;
  s.seed = seed;
  s.output_dir = "out/" + experiment_name(name);
  s.train.seed = seed;
  s.pnp.power_seed = seed;
  s.lambdas.clear();
  for (int i = 0; i <= 20; ++i) s.lambdas.push_back(i / 20.0);

  switch (name) {
    case ExperimentName::laplacian:
      s.arch = IcnnArch{1, {50, 50, 50, 50}, 0.01, 10.0};
      s.source = DataSource::laplacian(0.0, 1.0);
      break;
    case ExperimentName::prior_sweep:
      s.arch = IcnnArch{8, {64, 64, 64}, 0.01, 10.0};
      s.source = two_mode_source(8, 1.0, 0.05);
      s.train.sigma = 0.1;
      s.train.batch_size = 256;
      s.train.pretrain = {{3000, 1e-3}};
      s.train.schedule = GammaSchedule{{{1000, 0.4, 1e-4}, {1000, 0.2, 1e-4}, {1000, 0.1, 1e-5}}};
      break;
    case ExperimentName::deblur:
    case ExperimentName::compressed_sensing: {
      s.arch = IcnnArch{64, {128, 128}, 0.1, 10.0};
      s.source = smooth_signal_source(64, 4, 0.02, 1);
      s.train.sigma = 0.05;
      s.train.batch_size = 256;
      s.train.pretrain = {{3000, 1e-3}, {2000, 1e-4}};
      s.train.pretrain_loss = LossType::l2;
      s.train.schedule = GammaSchedule{};
      s.num_samples = 1;
      if (name == ExperimentName::deblur) {
        s.operator_spec = {{"kind", "blur"}, {"kernel", {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0}},
                           {"length", 64}};
        s.measurement_noise = 0.01;
      } else {
        s.operator_spec = {{"kind", "gaussian_cs"}, {"m", 64}, {"n", 64}, {"seed", seed}};
        s.measurement_noise = 0.0;
      }
      break;
    }
  }
  return s;
}

json spec_to_json(const ExperimentSpec& s) {
  json j{{"name", experiment_name(s.name)},
         {"seed", s.seed},
         {"output_dir", s.output_dir.string()},
         {"arch", arch_to_json(s.arch)},
         {"train", train_config_to_json(s.train)},
         {"source", source_to_json(s.source)},
         {"grid", {{"lo", s.grid.lo}, {"hi", s.grid.hi}, {"points", s.grid.points}}},
         {"prior_band", s.prior_band},
         {"noise_levels", s.noise_levels},
         {"lambdas", s.lambdas},
         {"num_samples", s.num_samples},
         {"measurement_noise", s.measurement_noise},
         {"solver", s.solver == SolverKind::pgd ? "pgd" : "admm"},
         {"pnp", pnp_config_to_json(s.pnp)},
         {"inversion_tol", s.inversion_tol},
         {"inversion_max_iters", s.inversion_max_iters}};
  if (s.checkpoint) j["checkpoint"] = s.checkpoint->string();
  if (!s.operator_spec.is_null()) j["operator"] = s.operator_spec;
  return j;
}

ExperimentSpec spec_from_json(const json& j) {
  const auto name = experiment_from_name(j.value("name", std::string("laplacian")));
  const auto seed = j.value("seed", std::uint64_t{0});
  ExperimentSpec s = ExperimentSpec::defaults(name, seed);
  if (j.contains("output_dir")) s.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("arch")) s.arch = arch_from_json(j.at("arch"));
  if (j.contains("train")) s.train = train_config_from_json(j.at("train"), s.train);
  if (j.contains("checkpoint")) s.checkpoint = j.at("checkpoint").get<std::string>();
  if (j.contains("source")) s.source = source_from_json(j.at("source"));
  if (j.contains("operator")) s.operator_spec = j.at("operator");
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    s.grid.lo = g.value("lo", s.grid.lo);
    s.grid.hi = g.value("hi", s.grid.hi);
    s.grid.points = g.value("points", s.grid.points);
  }
  s.prior_band = j.value("prior_band", s.prior_band);
  s.noise_levels = j.value("noise_levels", s.noise_levels);
  s.lambdas = j.value("lambdas", s.lambdas);
  s.num_samples = j.value("num_samples", s.num_samples);
  s.measurement_noise = j.value("measurement_noise", s.measurement_noise);
  if (j.contains("solver")) s.solver = j.at("solver").get<std::string>() == "pgd" ? SolverKind::pgd : SolverKind::admm;
  if (j.contains("pnp")) s.pnp = pnp_config_from_json(j.at("pnp"), s.pnp);
  s.inversion_tol = j.value("inversion_tol", s.inversion_tol);
  s.inversion_max_iters = j.value("inversion_max_iters", s.inversion_max_iters);
  s.validate();
  return s;
}

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log) {
  CsvTable t;
  t.header = {"iteration", "stage", "gamma", "lr", "loss"};
  for (const auto& r : log)
    t.add_row({std::to_string(r.iteration), r.stage, format_double(r.gamma), format_double(r.lr),
               format_double(r.loss)});
  write_csv(path, t);
}

namespace {

/// soft_threshold threshold and posterior-mean scaling for a Laplacian source.
struct LaplaceTruth {
  double scale = 1.0;
  double sigma = 1.0;
  double threshold() const { return sigma * sigma / scale; }
  double posterior_mean(double y) const { return scale * laplace_posterior_mean(y / scale, sigma / scale); }
};

LaplaceTruth laplace_truth(const ExperimentSpec& spec) {
  const auto* lap = std::get_if<LaplacianSource>(&spec.source.kind);
  if (!lap || spec.arch.input_dim != 1) throw std::invalid_argument("laplacian experiment needs a 1-D Laplacian source");
  if (lap->mu != 0.0) throw std::invalid_argument("laplacian experiment expects a zero-mean source");
  if (!(spec.train.sigma > 0.0)) throw std::invalid_argument("laplacian experiment needs sigma > 0");
  return {lap->scale, spec.train.sigma};
}

json model_json(const LaplacianModel& m) {
  return {{"sup_error_soft", m.sup_error_soft},
          {"mean_error_soft", m.mean_error_soft},
          {"mean_error_posterior", m.mean_error_posterior},
          {"prior_sup_distance", m.prior_sup_distance},
          {"prior_failures", m.prior_failures}};
}

std::mt19937_64 experiment_rng(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt)};
  return std::mt19937_64(seq);
}

}  // namespace

LaplacianModel evaluate_laplacian_model(const std::string& name, const IcnnParams& params, const IcnnArch& arch,
                                        const ExperimentSpec& spec) {
  const LaplaceTruth truth = laplace_truth(spec);
  const Eigen::VectorXd grid = spec.grid.values();
  const Eigen::VectorXd f = lpn_forward_batch(params, arch, grid.transpose()).row(0).transpose();

  LaplacianModel m;
  m.name = name;
  m.params = params;
  double sum_soft = 0.0;
  double sum_post = 0.0;
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const double e = std::abs(f[i] - soft_threshold(grid[i], truth.threshold()));
    m.sup_error_soft = std::max(m.sup_error_soft, e);
    sum_soft += e;
    sum_post += std::abs(f[i] - truth.posterior_mean(grid[i]));
  }
  m.mean_error_soft = sum_soft / static_cast<double>(grid.size());
  m.mean_error_posterior = sum_post / static_cast<double>(grid.size());

  std::vector<double> band;
  for (double x : grid)
    if (std::abs(x) <= spec.prior_band + 1e-12) band.push_back(x);
  if (band.empty()) throw std::invalid_argument("evaluate_laplacian_model: no grid points inside the prior band");
  const Eigen::RowVectorXd xs = Eigen::Map<const Eigen::RowVectorXd>(band.data(), static_cast<Eigen::Index>(band.size()));
  const PriorCurve curve = eval_prior_curve(params, arch, xs, spec.inversion_tol, spec.inversion_max_iters);
  double abs_min = INFINITY;
  for (double x : band) abs_min = std::min(abs_min, truth.threshold() * std::abs(x));
  for (std::size_t i = 0; i < band.size(); ++i) {
    if (!curve.inversions[i].converged) continue;
    const double target = truth.threshold() * std::abs(band[i]) - abs_min;
    m.prior_sup_distance = std::max(m.prior_sup_distance, std::abs(curve.values[i] - target));
  }
  m.prior_failures = curve.failures();
  return m;
}

const LaplacianModel& LaplacianReport::model(const std::string& name) const {
  for (const auto& m : models)
    if (m.name == name) return m;
  throw std::out_of_range("no model named '" + name + "'");
}

LaplacianReport run_laplacian(const ExperimentSpec& spec) {
  spec.validate();
  const LaplaceTruth truth = laplace_truth(spec);

  TrainConfig l2_config = spec.train;
  l2_config.pretrain_loss = LossType::l2;
  l2_config.schedule = GammaSchedule{};
  const TrainResult l2_run = train(spec.arch, l2_config, spec.source);
  const TrainResult pm_run = train(spec.arch, spec.train, spec.source);

  const std::filesystem::path& out = spec.output_dir;
  std::filesystem::create_directories(out);
  write_train_log(out / "train_l2.csv", l2_run.log);
  write_train_log(out / "train_pm.csv", pm_run.log);

  LaplacianReport report;
  report.grid = spec.grid.values();
  const std::vector<std::pair<std::string, const IcnnParams*>> nets{
      {"l2", &l2_run.params}, {"l1", &pm_run.pretrained}, {"pm", &pm_run.params}};

  CsvTable curves;
  curves.header = {"x", "soft_threshold", "posterior_mean"};
  for (const auto& [name, p] : nets) curves.header.push_back("f_" + name);
  for (const auto& [name, p] : nets) curves.header.push_back("psi_" + name);
  for (const auto& [name, p] : nets) curves.header.push_back("R_" + name);
  for (const auto& [name, p] : nets) curves.header.push_back("R_ok_" + name);

  const Eigen::RowVectorXd xs = report.grid.transpose();
  std::vector<Eigen::RowVectorXd> f_rows, psi_rows;
  std::vector<PriorCurve> priors;
  for (const auto& [name, p] : nets) {
    save_checkpoint(out / (name + ".ckpt"), Checkpoint{spec.arch, *p, spec.seed});
    f_rows.push_back(lpn_forward_batch(*p, spec.arch, xs).row(0));
    psi_rows.push_back(psi_batch(*p, spec.arch, xs).transpose());
    priors.push_back(eval_prior_curve(*p, spec.arch, xs, spec.inversion_tol, spec.inversion_max_iters));
    report.models.push_back(evaluate_laplacian_model(name, *p, spec.arch, spec));
  }
  for (Eigen::Index i = 0; i < xs.size(); ++i) {
    std::vector<std::string> row{format_double(xs[i]), format_double(soft_threshold(xs[i], truth.threshold())),
                                 format_double(truth.posterior_mean(xs[i]))};
    for (const auto& r : f_rows) row.push_back(format_double(r[i]));
    for (const auto& r : psi_rows) row.push_back(format_double(r[i]));
    for (const auto& c : priors) row.push_back(format_double(c.values[static_cast<std::size_t>(i)]));
    for (const auto& c : priors) row.push_back(c.inversions[static_cast<std::size_t>(i)].converged ? "1" : "0");
    curves.add_row(std::move(row));
  }
  write_csv(out / "laplacian_curves.csv", curves);

  json models = json::object();
  for (const auto& m : report.models) models[m.name] = model_json(m);
  write_json(out / "summary.json", {{"experiment", "laplacian"}, {"spec", spec_to_json(spec)}, {"models", models}});
  return report;
}

bool SweepReport::noise_increasing() const {
  for (std::size_t i = 1; i < noise_mean_r.size(); ++i)
    if (!(noise_mean_r[i] > noise_mean_r[i - 1])) return false;
  return true;
}

bool SweepReport::interior_max(double lo, double hi) const {
  if (lambdas.empty()) return false;
  const double l = lambdas[lambda_argmax];
  return l > lo && l < hi;
}

SweepReport run_prior_sweep(const ExperimentSpec& spec, const Checkpoint& model) {
  spec.validate();
  const IcnnArch& arch = model.arch;
  if (arch.input_dim != spec.source.dim) throw std::invalid_argument("run_prior_sweep: model/source dim mismatch");
  auto rng = experiment_rng(spec.seed, 0x5eef);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = arch.input_dim;
  const auto count = static_cast<Eigen::Index>(spec.num_samples);

  // Pairs (x, x') from different modes when the source is a mixture.
  Eigen::MatrixXd first(n, count), second(n, count);
  if (const auto* gm = std::get_if<GaussianMixtureSource>(&spec.source.kind); gm && gm->means.size() >= 2) {
    for (Eigen::Index i = 0; i < count; ++i)
      for (int d = 0; d < n; ++d) {
        first(d, i) = gm->means[0][d] + gm->stddevs[0] * normal(rng);
        second(d, i) = gm->means[1][d] + gm->stddevs[1] * normal(rng);
      }
  } else {
    first = sample(spec.source, count, rng);
    second = sample(spec.source, count, rng);
  }
  Eigen::MatrixXd directions(n, count);
  for (Eigen::Index i = 0; i < directions.size(); ++i) directions.data()[i] = normal(rng);

  SweepReport report;
  report.noise_levels = spec.noise_levels;
  report.lambdas = spec.lambdas;

  const auto evaluate = [&](const Eigen::MatrixXd& points, std::vector<std::optional<Eigen::VectorXd>>& starts,
                            std::vector<double>& raw, std::vector<char>& ok) {
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
      const PriorEval e = eval_prior(model.params, arch, points.col(i), spec.inversion_tol, spec.inversion_max_iters,
                                     starts[static_cast<std::size_t>(i)]);
      raw.push_back(e.value);
      ok.push_back(e.ok());
      if (!e.ok()) ++report.failures;
      starts[static_cast<std::size_t>(i)] = e.inversion.y_hat;
    }
  };

  // raw[level][sample]
  std::vector<std::vector<double>> noise_raw, lambda_raw;
  std::vector<std::vector<char>> noise_ok, lambda_ok;
  std::vector<std::optional<Eigen::VectorXd>> starts(static_cast<std::size_t>(count));
  for (double s : spec.noise_levels) {
    noise_raw.emplace_back();
    noise_ok.emplace_back();
    evaluate(first + s * directions, starts, noise_raw.back(), noise_ok.back());
  }
  std::fill(starts.begin(), starts.end(), std::nullopt);
  for (double l : spec.lambdas) {
    lambda_raw.emplace_back();
    lambda_ok.emplace_back();
    evaluate((1.0 - l) * first + l * second, starts, lambda_raw.back(), lambda_ok.back());
  }

  double offset = INFINITY;
  for (const auto* table : {&noise_raw, &lambda_raw})
    for (std::size_t a = 0; a < table->size(); ++a)
      for (std::size_t b = 0; b < (*table)[a].size(); ++b) {
        const bool good = table == &noise_raw ? noise_ok[a][b] : lambda_ok[a][b];
        if (good) offset = std::min(offset, (*table)[a][b]);
      }
  if (!std::isfinite(offset)) offset = 0.0;

  const auto mean_of = [&](const std::vector<double>& raw, const std::vector<char>& ok, std::size_t* used) {
    double sum = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < raw.size(); ++i)
      if (ok[i]) {
        sum += raw[i] - offset;
        ++k;
      }
    *used = k;
    return k ? sum / static_cast<double>(k) : NAN;
  };

  CsvTable noise_csv, lambda_csv;
  noise_csv.header = {"sigma", "mean_R", "converged", "failures"};
  lambda_csv.header = {"lambda", "mean_R", "converged", "failures"};
  for (std::size_t i = 0; i < noise_raw.size(); ++i) {
    std::size_t used = 0;
    report.noise_mean_r.push_back(mean_of(noise_raw[i], noise_ok[i], &used));
    noise_csv.add_row({format_double(spec.noise_levels[i]), format_double(report.noise_mean_r.back()),
                       std::to_string(used), std::to_string(noise_raw[i].size() - used)});
  }
  for (std::size_t i = 0; i < lambda_raw.size(); ++i) {
    std::size_t used = 0;
    report.lambda_mean_r.push_back(mean_of(lambda_raw[i], lambda_ok[i], &used));
    lambda_csv.add_row({format_double(spec.lambdas[i]), format_double(report.lambda_mean_r.back()),
                        std::to_string(used), std::to_string(lambda_raw[i].size() - used)});
  }
  report.lambda_argmax = static_cast<std::size_t>(
      std::max_element(report.lambda_mean_r.begin(), report.lambda_mean_r.end(),
                       [](double a, double b) { return std::isnan(a) || (!std::isnan(b) && a < b); }) -
      report.lambda_mean_r.begin());

  const auto& out = spec.output_dir;
  write_csv(out / "prior_vs_noise.csv", noise_csv);
  write_csv(out / "prior_vs_lambda.csv", lambda_csv);
  write_json(out / "summary.json", {{"experiment", "prior_sweep"},
                                    {"spec", spec_to_json(spec)},
                                    {"noise_mean_R", report.noise_mean_r},
                                    {"lambda_mean_R", report.lambda_mean_r},
                                    {"lambda_argmax", report.lambdas[report.lambda_argmax]},
                                    {"noise_increasing", report.noise_increasing()},
                                    {"interior_max", report.interior_max()},
                                    {"inversion_failures", report.failures}});
  return report;
}

InverseReport run_inverse_problem(const ExperimentSpec& spec, const Checkpoint& model) {
  spec.validate();
  const LinearOperator op = operator_from_json(spec.operator_spec);
  const IcnnArch& arch = model.arch;
  if (op.input_dim() != arch.input_dim) throw std::invalid_argument("run_inverse_problem: operator/model dim mismatch");

  auto rng = experiment_rng(spec.seed, 0x1b7e);
  std::normal_distribution<double> normal(0.0, 1.0);
  InverseReport report;
  report.x_true = sample(spec.source, 1, rng).col(0);
  report.y = apply(op, report.x_true);
  for (Eigen::Index i = 0; i < report.y.size(); ++i) report.y[i] += spec.measurement_noise * normal(rng);

  const Eigen::VectorXd x0 = adjoint(op, report.y);
  PnpResult result = spec.solver == SolverKind::admm ? admm_solve(model.params, arch, op, report.y, spec.pnp, x0)
                                                     : pgd_solve(model.params, arch, op, report.y, spec.pnp, x0);
  report.x_hat = result.x;
  report.state = std::move(result.state);
  report.reconstruction = metrics(report.x_true, report.x_hat);
  report.measurement = metrics(report.x_true, op.input_dim() == op.output_dim() ? report.y : x0);
  if (spec.solver == SolverKind::admm) {
    report.kkt = kkt_residuals(model.params, arch, op, report.y, report.state, report.state.step);
    report.kkt_available = true;
  }

  CsvTable history;
  history.header = {"iteration", "fp_residual", "primal_residual", "objective_proxy"};
  for (const auto& r : report.state.history)
    history.add_row({std::to_string(r.iteration), format_double(r.fp_residual), format_double(r.primal_residual),
                     format_double(r.objective_proxy)});
  const auto& out = spec.output_dir;
  write_csv(out / "history.csv", history);

  const auto metric_json = [](const MetricReport& m) {
    return json{{"psnr", m.psnr}, {"mse", m.mse}, {"sup_error", m.sup_error}, {"peak", m.peak}};
  };
  json summary{{"experiment", experiment_name(spec.name)},
               {"spec", spec_to_json(spec)},
               {"solver", spec.solver == SolverKind::admm ? "admm" : "pgd"},
               {"iterations", report.state.iterations},
               {"converged", report.state.converged},
               {"step", report.state.step},
               {"op_norm", report.state.op_norm},
               {"warnings", report.state.warnings},
               {"reconstruction", metric_json(report.reconstruction)},
               {"measurement", metric_json(report.measurement)}};
  if (report.kkt_available)
    summary["kkt"] = {{"r1", report.kkt.r1}, {"r2", report.kkt.r2}, {"r3", report.kkt.r3}};
  write_json(out / "summary.json", summary);
  return report;
}

Checkpoint obtain_model(const ExperimentSpec& spec) {
  if (spec.checkpoint) return load_checkpoint(*spec.checkpoint);
  const TrainResult run = train(spec.arch, spec.train, spec.source);
  Checkpoint ckpt{spec.arch, run.params, spec.seed};
  std::filesystem::create_directories(spec.output_dir);
  save_checkpoint(spec.output_dir / "model.ckpt", ckpt);
  write_train_log(spec.output_dir / "train.csv", run.log);
  return ckpt;
}

}  // namespace lpn
