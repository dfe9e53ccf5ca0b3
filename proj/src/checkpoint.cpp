#include "lpn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "lpn/config.hpp"

namespace lpn {
namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return out;
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ckpt.arch.validate();
  if (!ckpt.params.matches(ckpt.arch)) throw std::invalid_argument("save_checkpoint: params do not match arch");
  const Eigen::VectorXd flat = flatten(ckpt.params);

  nlohmann::json header;
  header["format"] = "lpn-checkpoint";
  header["version"] = kCheckpointVersion;
  header["seed"] = ckpt.seed;
  header["arch"] = arch_to_json(ckpt.arch);
  header["count"] = flat.size();
  header["dtype"] = "f64le";
  header["layout"] = "row-major";
  header["order"] = "H1,b1,W2,H2,b2,...,WK,HK,bK,w,b";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  const std::string text = header.dump();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.put('\n');
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(flat[i]));
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_checkpoint: missing header in " + path.string());
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != "lpn-checkpoint")
    throw std::runtime_error("load_checkpoint: not an lpn checkpoint: " + path.string());
  if (header.at("version").get<int>() != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported version");

  Checkpoint ckpt;
  ckpt.arch = arch_from_json(header.at("arch"));
  ckpt.arch.validate();
  ckpt.seed = header.value("seed", std::uint64_t{0});
  const auto count = header.at("count").get<std::size_t>();
  if (count != ckpt.arch.num_params()) throw std::runtime_error("load_checkpoint: parameter count mismatch");

  Eigen::VectorXd flat(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    char bytes[8];
    if (!in.read(bytes, 8)) throw std::runtime_error("load_checkpoint: truncated payload");
    std::uint64_t bits = 0;
    std::memcpy(&bits, bytes, 8);
    flat[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(to_little_endian(bits));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("load_checkpoint: trailing bytes");
  ckpt.params = unflatten<IcnnParams>(ckpt.arch, flat);
  return ckpt;
}

}  // namespace lpn
