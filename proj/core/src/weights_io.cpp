#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "evlab/dataset.hpp"
#include "evlab/errors.hpp"
#include "evlab/model.hpp"

namespace evlab {
namespace {

constexpr char kMagic[4] = {'E', 'V', 'L', 'W'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(bytes.data(), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& field) {
  std::array<char, sizeof(T)> bytes;
  if (!is.read(bytes.data(), sizeof(T))) throw PersistenceError("weight file truncated in " + field);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

}  // namespace

void save_tensors(const std::filesystem::path& path,
                  const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw PersistenceError("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put<double>(os, v);
  }
  if (!os) throw PersistenceError("write failed for " + path.string());
}

std::vector<std::pair<std::string, Tensor>> load_tensors(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw PersistenceError("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw PersistenceError(path.string() + ": bad magic (expected EVLW)");
  }
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion) throw PersistenceError(path.string() + ": unsupported version " + std::to_string(version));

  std::vector<std::pair<std::string, Tensor>> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto len = get<std::uint32_t>(is, "name length");
    if (len == 0 || len > 4096) throw PersistenceError("weight file: implausible name length " + std::to_string(len));
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw PersistenceError("weight file truncated in name");
    const auto rank = get<std::uint32_t>(is, name + ".rank");
    if (rank == 0 || rank > 8) throw PersistenceError("weight file: bad rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) {
      d = get<std::uint32_t>(is, name + ".dims");
      if (d == 0) throw PersistenceError("weight file: zero dimension in " + name);
    }
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = get<double>(is, name + ".values");
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void save_weights(const Model& model, const std::filesystem::path& path) {
  save_tensors(path, model.named_parameters());
}

Model load_weights(const std::filesystem::path& path) {
  auto stored = load_tensors(path);
  auto find = [&](const std::string& name) -> const Tensor* {
    for (const auto& [n, t] : stored) {
      if (n == name) return &t;
    }
    return nullptr;
  };

  Rng dummy(0);
  Model skeleton(ModelKind::Ffnn, 1);
  if (const Tensor* conv = find("conv3.weight")) {
    if (conv->rank() != 3) throw PersistenceError("conv3.weight: expected rank 3");
    skeleton = build_parallel_conv_net(conv->dim(1), dummy);
  } else if (const Tensor* dec = find("dec.fc3.weight")) {
    if (dec->rank() != 2 || dec->dim(0) % kSamplesPerTrial != 0) {
      throw PersistenceError("dec.fc3.weight: output width is not a multiple of 256");
    }
    skeleton = build_decoder(dec->dim(0) / kSamplesPerTrial, dummy);
  } else if (const Tensor* fc1 = find("fc1.weight")) {
    if (fc1->rank() != 2 || fc1->dim(1) % kSamplesPerTrial != 0) {
      throw PersistenceError("fc1.weight: input width is not a multiple of 256");
    }
    skeleton = build_ffnn(fc1->dim(1) / kSamplesPerTrial, dummy);
  } else {
    throw PersistenceError(path.string() + ": cannot infer architecture (no conv3.weight, dec.fc3.weight or fc1.weight)");
  }

  if (stored.size() != skeleton.named_parameters().size()) {
    for (const auto& [n, t] : stored) {
      if (!skeleton.has_parameter(n)) throw PersistenceError("unexpected parameter " + n);
    }
  }
  for (const auto& [name, t] : skeleton.named_parameters()) {
    const Tensor* src = find(name);
    if (!src) throw PersistenceError("missing parameter " + name);
    if (src->shape() != t.shape()) {
      throw PersistenceError("parameter " + name + ": shape " + shape_str(src->shape()) + ", expected " +
                             shape_str(t.shape()));
    }
    Tensor dst = t;
    std::copy(src->data().begin(), src->data().end(), dst.mutable_data().begin());
  }
  return skeleton;
}

}  // namespace evlab
