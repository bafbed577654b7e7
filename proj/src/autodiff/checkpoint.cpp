#include "tgrec/autodiff/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "tgrec/errors.hpp"

namespace tgrec::ad {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic = {'T', 'G', 'R', 'C', 'K', 'P', 'T', '1'};
constexpr std::string_view kParamPrefix = "param.";

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
auto get(std::istream& in) -> T {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw DataError("checkpoint truncated");
  }
  return v;
}

auto get_string(std::istream& in) -> std::string {
  const auto len = get<std::uint32_t>(in);
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), len)) throw DataError("checkpoint truncated");
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

auto read_checkpoint(std::istream& in) -> Checkpoint {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  Checkpoint ckpt;
  const auto n_meta = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto key = get_string(in);
    ckpt.metadata[key] = get_string(in);
  }
  const auto n_tensors = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    auto name = get_string(in);
    const auto rank = get<std::uint32_t>(in);
    if (rank > 2) throw DataError("checkpoint tensor " + name + " has rank > 2");
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in);
    std::vector<double> data(shape_size(shape));
    if (!data.empty() &&
        !in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double)))) {
      throw DataError("checkpoint truncated in tensor " + name);
    }
    ckpt.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  write_checkpoint(out, ckpt);
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

auto load_checkpoint(const std::filesystem::path& path) -> Checkpoint {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

void put_params(Checkpoint& ckpt, const ModelParams& params) {
  for (const auto& [name, t] : params) {
    ckpt.tensors[std::string(kParamPrefix) + name] = t;
  }
}

auto take_params(const Checkpoint& ckpt) -> ModelParams {
  ModelParams params;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.starts_with(kParamPrefix)) {
      params.add(name.substr(kParamPrefix.size()), t);
    }
  }
  return params;
}

}  // namespace tgrec::ad
