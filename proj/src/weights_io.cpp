#include "hydrocast/denoiser.hpp"

#include "hydrocast/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace hydrocast {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_f32(std::ostream& out, float value) {
  auto bits = std::bit_cast<std::uint32_t>(value);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  char bytes[4];
  std::memcpy(bytes, &bits, 4);
  out.write(bytes, 4);
}

float get_f32(const char* bytes) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, bytes, 4);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
  return std::bit_cast<float>(bits);
}

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto blob = manifest;
  blob.replace_extension(".bin");
  return blob;
}

template <typename S>
void write_tensors(const std::filesystem::path& manifest_path, const std::vector<std::pair<std::string, const Mat<S>*>>& tensors,
                   nlohmann::json manifest) {
  const auto blob = blob_path(manifest_path);
  std::ofstream out(blob, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + blob.string());
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : tensors) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(m->size()) * 4;
    entries.push_back({{"name", name}, {"shape", {m->rows(), m->cols()}}, {"offset", offset}, {"bytes", bytes}});
    for (Eigen::Index i = 0; i < m->size(); ++i) put_f32(out, static_cast<float>(m->data()[i]));
    offset += bytes;
  }
  if (!out) throw Error(Errc::IoError, "failed writing " + blob.string());
  manifest["dtype"] = "float32";
  manifest["byte_order"] = "little";
  manifest["blob"] = blob.filename().string();
  manifest["total_bytes"] = offset;
  manifest["tensors"] = std::move(entries);
  std::ofstream json_out(manifest_path);
  if (!json_out) throw Error(Errc::IoError, "cannot write " + manifest_path.string());
  json_out << manifest.dump(2) << '\n';
}

nlohmann::json read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(Errc::IoError, "cannot open " + manifest_path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::IoError, manifest_path.string() + ": " + e.what());
  }
}

template <typename S>
void read_tensors(const std::filesystem::path& manifest_path, const nlohmann::json& manifest,
                  const std::vector<std::pair<std::string, Mat<S>*>>& tensors) {
  if (manifest.value("dtype", "") != "float32") throw Error(Errc::IoError, "unsupported dtype in manifest");
  const auto blob = manifest_path.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream in(blob, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + blob.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const auto& entries = manifest.at("tensors");
  if (entries.size() != tensors.size()) throw Error(Errc::ShapeMismatch, "manifest tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& e = entries[i];
    auto& [name, m] = tensors[i];
    const auto shape = e.at("shape").get<std::vector<Eigen::Index>>();
    if (e.at("name").get<std::string>() != name || shape.size() != 2 || shape[0] != m->rows() ||
        shape[1] != m->cols()) {
      throw Error(Errc::ShapeMismatch, "manifest entry " + std::to_string(i) + " does not match tensor " + name);
    }
    const auto offset = e.at("offset").get<std::uint64_t>();
    if (offset + static_cast<std::uint64_t>(m->size()) * 4 > bytes.size()) {
      throw Error(Errc::IoError, "blob too short for tensor " + name);
    }
    for (Eigen::Index j = 0; j < m->size(); ++j) m->data()[j] = static_cast<S>(get_f32(bytes.data() + offset + 4 * j));
  }
}

}  // namespace

template <typename S>
void save_params(const DenoiserParams<S>& params, const std::filesystem::path& manifest) {
  write_tensors<S>(manifest, params.tensors(), {{"format", "hydrocast-weights"}, {"version", 1}, {"architecture", params.arch}});
}

template <typename S>
DenoiserParams<S> load_params(const std::filesystem::path& manifest_path) {
  const auto manifest = read_manifest(manifest_path);
  auto params = DenoiserParams<S>::zeros(manifest.at("architecture").get<Architecture>());
  read_tensors<S>(manifest_path, manifest, params.tensors());
  return params;
}

template <typename S>
void save_optimizer(const OptimizerState<S>& state, const std::filesystem::path& manifest) {
  std::vector<std::pair<std::string, const Mat<S>*>> tensors;
  for (const auto& [name, m] : state.first_moment.tensors()) tensors.emplace_back("m/" + name, m);
  for (const auto& [name, m] : state.second_moment.tensors()) tensors.emplace_back("v/" + name, m);
  write_tensors<S>(manifest, tensors,
                   {{"format", "hydrocast-adam"},
                    {"version", 1},
                    {"architecture", state.first_moment.arch},
                    {"step", state.step},
                    {"learning_rate", state.learning_rate},
                    {"beta1", state.beta1},
                    {"beta2", state.beta2},
                    {"epsilon", state.epsilon}});
}

template <typename S>
OptimizerState<S> load_optimizer(const std::filesystem::path& manifest_path) {
  const auto manifest = read_manifest(manifest_path);
  const auto arch = manifest.at("architecture").get<Architecture>();
  OptimizerState<S> state;
  state.first_moment = DenoiserParams<S>::zeros(arch);
  state.second_moment = DenoiserParams<S>::zeros(arch);
  state.step = manifest.at("step").get<std::int64_t>();
  state.learning_rate = manifest.at("learning_rate").get<double>();
  state.beta1 = manifest.at("beta1").get<double>();
  state.beta2 = manifest.at("beta2").get<double>();
  state.epsilon = manifest.at("epsilon").get<double>();
  std::vector<std::pair<std::string, Mat<S>*>> tensors;
  for (auto& [name, m] : state.first_moment.tensors()) tensors.emplace_back("m/" + name, m);
  for (auto& [name, m] : state.second_moment.tensors()) tensors.emplace_back("v/" + name, m);
  read_tensors<S>(manifest_path, manifest, tensors);
  return state;
}

template void save_params<float>(const DenoiserParams<float>&, const std::filesystem::path&);
template void save_params<double>(const DenoiserParams<double>&, const std::filesystem::path&);
template DenoiserParams<float> load_params<float>(const std::filesystem::path&);
template DenoiserParams<double> load_params<double>(const std::filesystem::path&);
template void save_optimizer<float>(const OptimizerState<float>&, const std::filesystem::path&);
template OptimizerState<float> load_optimizer<float>(const std::filesystem::path&);

}  // namespace hydrocast
