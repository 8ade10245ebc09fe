#include "crforge/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "crforge/errors.hpp"

namespace crforge {
namespace {

constexpr char kMagic[8] = {'C', 'R', 'F', 'G', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

const Eigen::MatrixXd& Archive::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.data;
  }
  throw IoError("archive is missing tensor '" + name + "'");
}

bool Archive::has_tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

void write_archive(const std::string& path, const Archive& archive) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(archive.meta_json.size()));
  out.write(archive.meta_json.data(), static_cast<std::streamsize>(archive.meta_json.size()));
  write_pod(out, static_cast<std::uint64_t>(archive.tensors.size()));
  for (const auto& t : archive.tensors) {
    write_pod(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_pod(out, static_cast<std::uint64_t>(t.data.rows()));
    write_pod(out, static_cast<std::uint64_t>(t.data.cols()));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed to write checkpoint: " + path);
}

Archive read_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint file: " + path);
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Archive archive;
  const auto meta_len = read_pod<std::uint64_t>(in);
  archive.meta_json.resize(meta_len);
  in.read(archive.meta_json.data(), static_cast<std::streamsize>(meta_len));
  const auto n_tensors = read_pod<std::uint64_t>(in);
  archive.tensors.reserve(n_tensors);
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    NamedTensor t;
    const auto name_len = read_pod<std::uint32_t>(in);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    const auto rows = read_pod<std::uint64_t>(in);
    const auto cols = read_pod<std::uint64_t>(in);
    t.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    archive.tensors.push_back(std::move(t));
  }
  if (!in) throw IoError("truncated checkpoint: " + path);
  return archive;
}

}  // namespace crforge
