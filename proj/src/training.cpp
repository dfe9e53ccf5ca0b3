#include "lpn/training.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "lpn/csv.hpp"

namespace lpn {

void GammaSchedule::validate() const {
  double previous = INFINITY;
  for (const auto& s : stages) {
    if (s.iterations < 1) throw std::invalid_argument("GammaSchedule: stage iteration count must be >= 1");
    if (!(s.gamma > 0.0)) throw std::invalid_argument("GammaSchedule: gamma must be positive");
    if (!(s.learning_rate > 0.0)) throw std::invalid_argument("GammaSchedule: learning rate must be positive");
    if (s.gamma > previous) throw std::invalid_argument("GammaSchedule: gamma must be non-increasing");
    previous = s.gamma;
  }
}

long GammaSchedule::total_iterations() const {
  long total = 0;
  for (const auto& s : stages) total += s.iterations;
  return total;
}

GammaSchedule GammaSchedule::laplacian() {
  return GammaSchedule{{
      {2000, 0.5, 1e-3},
      {2000, 0.5, 1e-4},
      {4000, 0.4, 1e-4},
      {4000, 0.3, 1e-4},
      {4000, 0.2, 1e-5},
      {4000, 0.1, 1e-5},
      {4000, 0.1, 1e-6},
  }};
}

void TrainConfig::validate() const {
  if (!(sigma >= 0.0)) throw std::invalid_argument("TrainConfig: sigma must be nonnegative");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  for (const auto& s : pretrain) {
    if (s.iterations < 0) throw std::invalid_argument("TrainConfig: pretrain iterations must be >= 0");
    if (!(s.learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: pretrain learning rate must be positive");
  }
  if (pretrain_loss == LossType::proximal_matching)
    throw std::invalid_argument("TrainConfig: pretraining uses l1 or l2");
  schedule.validate();
}

long TrainConfig::pretrain_iterations() const {
  long total = 0;
  for (const auto& s : pretrain) total += s.iterations;
  return total;
}

DataSource DataSource::laplacian(double mu, double scale, int dim) {
  DataSource s{LaplacianSource{mu, scale}, dim};
  s.validate();
  return s;
}

DataSource DataSource::gaussian_mixture(std::vector<Eigen::VectorXd> means, std::vector<double> stddevs,
                                        std::vector<double> weights) {
  if (means.empty()) throw std::invalid_argument("gaussian_mixture: need at least one component");
  const int dim = static_cast<int>(means.front().size());
  DataSource s{GaussianMixtureSource{std::move(means), std::move(stddevs), std::move(weights)}, dim};
  s.validate();
  return s;
}

DataSource DataSource::from_file(const std::string& path) {
  Eigen::MatrixXd samples = read_samples_csv(path);
  const int dim = static_cast<int>(samples.rows());
  DataSource s{FileDatasetSource{path, std::move(samples)}, dim};
  s.validate();
  return s;
}

void DataSource::validate() const {
  if (dim < 1) throw std::invalid_argument("DataSource: dim must be >= 1");
  if (const auto* lap = std::get_if<LaplacianSource>(&kind)) {
    if (!(lap->scale > 0.0)) throw std::invalid_argument("DataSource: Laplacian scale must be positive");
  } else if (const auto* gm = std::get_if<GaussianMixtureSource>(&kind)) {
    if (gm->means.empty() || gm->means.size() != gm->stddevs.size() || gm->means.size() != gm->weights.size())
      throw std::invalid_argument("DataSource: mixture means/stddevs/weights must have equal nonzero length");
    for (std::size_t i = 0; i < gm->means.size(); ++i) {
      if (gm->means[i].size() != dim) throw std::invalid_argument("DataSource: mixture mean has wrong dimension");
      if (!(gm->stddevs[i] >= 0.0)) throw std::invalid_argument("DataSource: mixture stddev must be >= 0");
      if (!(gm->weights[i] > 0.0)) throw std::invalid_argument("DataSource: mixture weights must be positive");
    }
  } else {
    const auto& file = std::get<FileDatasetSource>(kind);
    if (file.samples.cols() == 0 || file.samples.rows() != dim)
      throw std::invalid_argument("DataSource: file dataset is empty or has the wrong dimension");
  }
}

Eigen::MatrixXd sample(const DataSource& source, Eigen::Index count, std::mt19937_64& rng) {
  Eigen::MatrixXd out(source.dim, count);
  if (const auto* lap = std::get_if<LaplacianSource>(&source.kind)) {
    // Inverse CDF: x = mu - b sign(u) log(1 - 2|u|), u ~ U[-1/2, 1/2).
    std::uniform_real_distribution<double> uniform(-0.5, 0.5);
    for (Eigen::Index j = 0; j < count; ++j)
      for (Eigen::Index i = 0; i < source.dim; ++i) {
        double u = uniform(rng);
        while (1.0 - 2.0 * std::abs(u) <= 0.0) u = uniform(rng);
        const double sign = u < 0 ? -1.0 : (u > 0 ? 1.0 : 0.0);
        out(i, j) = lap->mu - lap->scale * sign * std::log(1.0 - 2.0 * std::abs(u));
      }
  } else if (const auto* gm = std::get_if<GaussianMixtureSource>(&source.kind)) {
    std::discrete_distribution<std::size_t> pick(gm->weights.begin(), gm->weights.end());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index j = 0; j < count; ++j) {
      const std::size_t c = pick(rng);
      for (Eigen::Index i = 0; i < source.dim; ++i) out(i, j) = gm->means[c][i] + gm->stddevs[c] * normal(rng);
    }
  } else {
    const auto& file = std::get<FileDatasetSource>(source.kind);
    std::uniform_int_distribution<Eigen::Index> pick(0, file.samples.cols() - 1);
    for (Eigen::Index j = 0; j < count; ++j) out.col(j) = file.samples.col(pick(rng));
  }
  return out;
}

Batch make_batch(const DataSource& source, double sigma, int batch_size, std::mt19937_64& rng) {
  Batch batch;
  batch.x = sample(source, batch_size, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  batch.y = batch.x;
  if (sigma != 0.0)
    for (Eigen::Index j = 0; j < batch.y.cols(); ++j)
      for (Eigen::Index i = 0; i < batch.y.rows(); ++i) batch.y(i, j) += sigma * normal(rng);
  return batch;
}

AdamState AdamState::fresh(const IcnnArch& arch, const AdamHyper& hyper) {
  AdamState s;
  s.first_moment = ParamGrad::zeros(arch);
  s.second_moment = ParamGrad::zeros(arch);
  s.beta1 = hyper.beta1;
  s.beta2 = hyper.beta2;
  s.epsilon = hyper.epsilon;
  return s;
}

AdamResult adam_step(AdamState state, IcnnParams params, const ParamGrad& grad, double lr) {
  const Eigen::VectorXd g = flatten(grad);
  Eigen::VectorXd theta = flatten(params);
  Eigen::VectorXd m = flatten(state.first_moment);
  Eigen::VectorXd v = flatten(state.second_moment);
  if (g.size() != theta.size() || m.size() != theta.size() || v.size() != theta.size())
    throw std::invalid_argument("adam_step: shape mismatch between params, grad and optimizer state");

  state.step_count += 1;
  m = state.beta1 * m + (1.0 - state.beta1) * g;
  v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);

  assign_flat(state.first_moment, m);
  assign_flat(state.second_moment, v);
  assign_flat(params, theta);
  return {std::move(state), clip_nonneg(std::move(params))};
}

namespace {

std::string stage_label(LossType type, std::size_t index) {
  const char* name = type == LossType::l1 ? "l1" : type == LossType::l2 ? "l2" : "pm";
  return std::string(name) + ":" + std::to_string(index);
}

bool grad_finite(const ParamGrad& g) { return flatten(g).allFinite(); }

}  // namespace

TrainResult train(const IcnnArch& arch, const TrainConfig& config, const DataSource& source,
                  const std::optional<IcnnParams>& initial) {
  arch.validate();
  config.validate();
  source.validate();
  if (source.dim != arch.input_dim) throw std::invalid_argument("train: source dimension does not match arch");

  TrainResult result;
  result.params = initial ? clip_nonneg(*initial) : init_params(arch, config.seed, config.init);
  if (!result.params.matches(arch)) throw std::invalid_argument("train: initial params do not match arch");

  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32), 0x5eedu};
  std::mt19937_64 rng(seq);
  AdamState adam = AdamState::fresh(arch, config.adam);
  long iteration = 0;
  result.log.reserve(static_cast<std::size_t>(config.pretrain_iterations() + config.schedule.total_iterations()));

  auto run_stage = [&](const LossKind& kind, long iterations, double lr, const std::string& label) {
    const double gamma = kind.type == LossType::proximal_matching ? kind.gamma : 0.0;
    for (long i = 0; i < iterations; ++i, ++iteration) {
      const Batch batch = make_batch(source, config.sigma, config.batch_size, rng);
      const LossGrad lg = param_grad_through_lpn(result.params, arch, batch, kind);
      if (!std::isfinite(lg.loss) || !grad_finite(lg.grad)) {
        std::ostringstream msg;
        msg << "train: non-finite loss at iteration " << iteration << " (stage " << label << ", gamma " << gamma
            << ", lr " << lr << ")";
        throw TrainingError(msg.str(), iteration, gamma, lr);
      }
      result.log.push_back({iteration, label, gamma, lr, lg.loss});
      auto stepped = adam_step(std::move(adam), std::move(result.params), lg.grad, lr);
      adam = std::move(stepped.state);
      result.params = std::move(stepped.params);
    }
  };

  const LossKind pre_kind = config.pretrain_loss == LossType::l1 ? LossKind::l1() : LossKind::l2();
  for (std::size_t s = 0; s < config.pretrain.size(); ++s)
    run_stage(pre_kind, config.pretrain[s].iterations, config.pretrain[s].learning_rate,
              stage_label(config.pretrain_loss, s));
  result.pretrained = result.params;

  adam = AdamState::fresh(arch, config.adam);
  for (std::size_t s = 0; s < config.schedule.stages.size(); ++s) {
    const auto& stage = config.schedule.stages[s];
    run_stage(LossKind::pm(stage.gamma, config.loss_form), stage.iterations, stage.learning_rate,
              stage_label(LossType::proximal_matching, s));
  }
  return result;
}

}  // namespace lpn
