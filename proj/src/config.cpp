#include "lpn/config.hpp"

#include <stdexcept>

namespace lpn {

using nlohmann::json;

namespace {

std::string loss_name(LossType t) {
  switch (t) {
    case LossType::l1: return "l1";
    case LossType::l2: return "l2";
    case LossType::proximal_matching: return "pm";
  }
  return "l2";
}

LossType loss_from_name(const std::string& s) {
  if (s == "l1") return LossType::l1;
  if (s == "l2") return LossType::l2;
  if (s == "pm") return LossType::proximal_matching;
  throw std::invalid_argument("unknown loss '" + s + "'");
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("expected a nonempty matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw std::invalid_argument("ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

json arch_to_json(const IcnnArch& arch) {
  return json{{"input_dim", arch.input_dim},
              {"hidden_widths", arch.hidden_widths},
              {"alpha", arch.alpha},
              {"beta", arch.beta}};
}

IcnnArch arch_from_json(const json& j) {
  IcnnArch arch;
  arch.input_dim = j.value("input_dim", arch.input_dim);
  arch.hidden_widths = j.value("hidden_widths", arch.hidden_widths);
  arch.alpha = j.value("alpha", arch.alpha);
  arch.beta = j.value("beta", arch.beta);
  arch.validate();
  return arch;
}

json train_config_to_json(const TrainConfig& c) {
  json pretrain = json::array();
  for (const auto& s : c.pretrain) pretrain.push_back({s.iterations, s.learning_rate});
  json schedule = json::array();
  for (const auto& s : c.schedule.stages) schedule.push_back({s.iterations, s.gamma, s.learning_rate});
  return json{{"sigma", c.sigma},
              {"batch_size", c.batch_size},
              {"pretrain", pretrain},
              {"pretrain_loss", loss_name(c.pretrain_loss)},
              {"schedule", schedule},
              {"seed", c.seed},
              {"loss_form", c.loss_form == PmForm::normalized ? "normalized" : "unnormalized"},
              {"init", c.init == InitScheme::exp_gaussian ? "exp_gaussian" : "gaussian"},
              {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}}}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  c.sigma = j.value("sigma", c.sigma);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("pretrain")) {
    c.pretrain.clear();
    for (const auto& s : j.at("pretrain")) c.pretrain.push_back({s.at(0).get<long>(), s.at(1).get<double>()});
  } else if (j.contains("pretrain_iters")) {
    c.pretrain = {{j.at("pretrain_iters").get<long>(), j.value("pretrain_lr", 1e-3)}};
  }
  if (j.contains("pretrain_loss")) c.pretrain_loss = loss_from_name(j.at("pretrain_loss").get<std::string>());
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    if (s.is_string()) {
      if (s.get<std::string>() != "laplacian") throw std::invalid_argument("unknown schedule name");
      c.schedule = GammaSchedule::laplacian();
    } else {
      c.schedule.stages.clear();
      for (const auto& st : s)
        c.schedule.stages.push_back({st.at(0).get<long>(), st.at(1).get<double>(), st.at(2).get<double>()});
    }
  }
  c.seed = j.value("seed", c.seed);
  if (j.contains("loss_form"))
    c.loss_form = j.at("loss_form").get<std::string>() == "normalized" ? PmForm::normalized : PmForm::unnormalized;
  if (j.contains("init"))
    c.init = j.at("init").get<std::string>() == "exp_gaussian" ? InitScheme::exp_gaussian : InitScheme::gaussian;
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    c.adam.beta1 = a.value("beta1", c.adam.beta1);
    c.adam.beta2 = a.value("beta2", c.adam.beta2);
    c.adam.epsilon = a.value("epsilon", c.adam.epsilon);
  }
  c.validate();
  return c;
}

json source_to_json(const DataSource& source) {
  if (const auto* lap = std::get_if<LaplacianSource>(&source.kind))
    return json{{"kind", "laplacian"}, {"mu", lap->mu}, {"scale", lap->scale}, {"dim", source.dim}};
  if (const auto* gm = std::get_if<GaussianMixtureSource>(&source.kind)) {
    json means = json::array();
    for (const auto& m : gm->means) means.push_back(std::vector<double>(m.data(), m.data() + m.size()));
    return json{{"kind", "gaussian_mixture"}, {"means", means}, {"stddevs", gm->stddevs}, {"weights", gm->weights}};
  }
  return json{{"kind", "file"}, {"path", std::get<FileDatasetSource>(source.kind).path}};
}

DataSource source_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "laplacian") return DataSource::laplacian(j.value("mu", 0.0), j.value("scale", 1.0), j.value("dim", 1));
  if (kind == "gaussian_mixture") {
    std::vector<Eigen::VectorXd> means;
    for (const auto& m : j.at("means")) means.push_back(vector_from_json(m));
    auto stddevs = j.at("stddevs").get<std::vector<double>>();
    auto weights = j.contains("weights") ? j.at("weights").get<std::vector<double>>()
                                         : std::vector<double>(means.size(), 1.0);
    return DataSource::gaussian_mixture(std::move(means), std::move(stddevs), std::move(weights));
  }
  if (kind == "file") return DataSource::from_file(j.at("path").get<std::string>());
  throw std::invalid_argument("unknown data source kind '" + kind + "'");
}

json operator_to_json(const LinearOperator& op) {
  return std::visit(
      [&](const auto& k) -> json {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, IdentityOp>) {
          return {{"kind", "identity"}, {"dim", k.dim}};
        } else if constexpr (std::is_same_v<K, BlurOp>) {
          return {{"kind", "blur"}, {"kernel", matrix_to_json(k.kernel)}, {"rows", k.rows}, {"cols", k.cols}};
        } else if constexpr (std::is_same_v<K, GaussianCsOp>) {
          return {{"kind", "gaussian_cs"}, {"m", k.m}, {"n", k.n}, {"seed", k.seed}};
        } else if constexpr (std::is_same_v<K, MaskOp>) {
          return {{"kind", "mask"}, {"dim", k.dim}, {"indices", k.indices}};
        } else {
          return {{"kind", "dense"}, {"matrix", matrix_to_json(k.matrix)}};
        }
      },
      op.kind());
}

LinearOperator operator_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "identity") return LinearOperator::identity(j.at("dim").get<int>());
  if (kind == "blur") {
    const auto& k = j.at("kernel");
    if (!k.empty() && k.front().is_array())
      return LinearOperator::blur_2d(matrix_from_json(k), j.value("rows", 1), j.at("cols").get<int>());
    const int length = j.contains("length") ? j.at("length").get<int>() : j.at("cols").get<int>();
    return LinearOperator::blur(vector_from_json(k), length);
  }
  if (kind == "gaussian_cs")
    return LinearOperator::gaussian_cs(j.at("m").get<int>(), j.at("n").get<int>(), j.value("seed", std::uint64_t{0}));
  if (kind == "mask") return LinearOperator::mask(j.at("dim").get<int>(), j.at("indices").get<std::vector<int>>());
  if (kind == "dense") return LinearOperator::dense(matrix_from_json(j.at("matrix")));
  throw std::invalid_argument("unknown operator kind '" + kind + "'");
}

json pnp_config_to_json(const PnpConfig& c) {
  return json{{"rho", c.rho},
              {"eta", c.eta},
              {"max_iters", c.max_iters},
              {"fp_tol", c.fp_tol},
              {"inner_cg_tol", c.inner_cg_tol},
              {"inner_cg_max_iters", c.inner_cg_max_iters},
              {"power_iters", c.power_iters},
              {"power_seed", c.power_seed}};
}

PnpConfig pnp_config_from_json(const json& j, PnpConfig c) {
  c.rho = j.value("rho", c.rho);
  c.eta = j.value("eta", c.eta);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.fp_tol = j.value("fp_tol", c.fp_tol);
  c.inner_cg_tol = j.value("inner_cg_tol", c.inner_cg_tol);
  c.inner_cg_max_iters = j.value("inner_cg_max_iters", c.inner_cg_max_iters);
  c.power_iters = j.value("power_iters", c.power_iters);
  c.power_seed = j.value("power_seed", c.power_seed);
  c.record_iterates = j.value("record_iterates", c.record_iterates);
  return c;
}

}  // namespace lpn
