#include "gnio/autodiff/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <vector>

#include "gnio/error.hpp"

namespace gnio::ad {
namespace {

constexpr std::array<char, 4> kMagic{'G', 'N', 'I', 'O'};
// Guards against absurd allocations from corrupted headers.
constexpr std::uint64_t kMaxNameLen = 4096;
constexpr std::uint64_t kMaxRank = 16;

template <typename T>
void put_le(std::ostream& os, T value) {
  auto bits = std::bit_cast<std::array<char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  os.write(bits.data(), bits.size());
}

template <typename T>
T get_le(std::istream& is, const std::filesystem::path& path) {
  std::array<char, sizeof(T)> bits{};
  if (!is.read(bits.data(), bits.size())) {
    throw IoError("checkpoint " + path.string() + ": truncated file");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  return std::bit_cast<T>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint " + path.string() + ": cannot open for writing");
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_le<std::uint64_t>(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint64_t>(os, t.rank());
    for (auto d : t.shape()) put_le<std::uint64_t>(os, d);
    for (double v : t.data()) put_le<double>(os, v);
  }
  if (!os) throw IoError("checkpoint " + path.string() + ": write failed");
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint " + path.string() + ": cannot open");
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw IoError("checkpoint " + path.string() + ": bad magic");
  }
  const auto version = get_le<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint " + path.string() + ": unsupported version " +
                  std::to_string(version));
  }
  const auto count = get_le<std::uint32_t>(is, path);
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get_le<std::uint64_t>(is, path);
    if (name_len > kMaxNameLen) throw IoError("checkpoint " + path.string() + ": bad name length");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(name_len))) {
      throw IoError("checkpoint " + path.string() + ": truncated name");
    }
    const auto rank = get_le<std::uint64_t>(is, path);
    if (rank > kMaxRank) throw IoError("checkpoint " + path.string() + ": bad rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = get_le<std::uint64_t>(is, path);
    std::vector<double> data(numel_of(shape));
    for (auto& v : data) v = get_le<double>(is, path);
    out.emplace(name, Tensor(std::move(shape), std::move(data)));
  }
  return out;
}

}  // namespace gnio::ad
