#pragma once

// JSON mappings for architecture, training, data-source, operator and
// experiment descriptions.

#include <json.hpp>

#include "lpn/icnn.hpp"
#include "lpn/operators.hpp"
#include "lpn/pnp.hpp"
#include "lpn/training.hpp"

namespace lpn {

nlohmann::json arch_to_json(const IcnnArch& arch);
IcnnArch arch_from_json(const nlohmann::json& j);

/// Keys: sigma, batch_size, pretrain ([[iters, lr], ...]) or
/// pretrain_iters + pretrain_lr, pretrain_loss ("l1"|"l2"),
/// schedule ([[iters, gamma, lr], ...] or "laplacian"), seed,
/// loss_form ("unnormalized"|"normalized"), init ("gaussian"|"exp_gaussian"),
/// adam {beta1, beta2, epsilon}. Missing keys keep their defaults.
nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// {"kind":"laplacian","mu":0,"scale":1}
/// {"kind":"gaussian_mixture","means":[[...],...],"stddevs":[...],"weights":[...]}
/// {"kind":"file","path":"samples.csv"}
nlohmann::json source_to_json(const DataSource& source);
DataSource source_from_json(const nlohmann::json& j);

/// {"kind":"identity","dim":n}
/// {"kind":"blur","kernel":[...],"length":n} or {"kind":"blur","kernel":[[...],...],"rows":r,"cols":c}
/// {"kind":"gaussian_cs","m":m,"n":n,"seed":s}
/// {"kind":"mask","dim":n,"indices":[...]}
/// {"kind":"dense","matrix":[[...],...]}
nlohmann::json operator_to_json(const LinearOperator& op);
LinearOperator operator_from_json(const nlohmann::json& j);

nlohmann::json pnp_config_to_json(const PnpConfig& config);
PnpConfig pnp_config_from_json(const nlohmann::json& j, PnpConfig base = {});

}  // namespace lpn
