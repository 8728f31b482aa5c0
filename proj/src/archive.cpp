// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/archive.hpp"

#include <unistd.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hdff/rng.hpp"

namespace hdff {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes little-endian host");

namespace {

constexpr char kMagic[8] = {'H', 'D', 'F', 'F', 'A', 'R', 'C', '\0'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos, const std::string& origin) {
  if (pos + sizeof(T) > in.size()) throw FormatError(origin + ": truncated archive");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

const Tensor& Archive::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw FormatError("archive '" + kind + "' has no tensor '" + name + "'");
  return it->second;
}

std::string encode_archive(const Archive& archive) {
  nlohmann::json header;
  header["kind"] = archive.kind;
  header["meta"] = archive.meta;
  auto list = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    list.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.size()) * sizeof(Real);
  }
  header["tensors"] = list;
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kArchiveSchema);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  for (const auto& [name, t] : archive.tensors)
    out.append(reinterpret_cast<const char*>(t.data()), static_cast<std::size_t>(t.size()) * sizeof(Real));
  put<std::uint64_t>(out, fnv1a64(out));
  return out;
}

Archive decode_archive(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < sizeof(kMagic) + 4 + 8 + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError(origin + ": not an HDFF archive or truncated");
  const std::size_t body = bytes.size() - sizeof(std::uint64_t);
  std::size_t tail = body;
  const auto stored = get<std::uint64_t>(bytes, tail, origin);
  if (stored != fnv1a64(std::string_view(bytes.data(), body)))
    throw FormatError(origin + ": checksum mismatch (partial or corrupted file)");

  std::size_t pos = sizeof(kMagic);
  const auto schema = get<std::uint32_t>(bytes, pos, origin);
  if (schema != kArchiveSchema)
    throw FormatError(origin + ": archive schema " + std::to_string(schema) + ", expected " +
                      std::to_string(kArchiveSchema));
  const auto header_len = get<std::uint64_t>(bytes, pos, origin);
  if (pos + header_len > body) throw FormatError(origin + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": bad archive header: " + e.what());
  }
  pos += header_len;

  Archive a;
  try {
    a.kind = header.at("kind").get<std::string>();
    a.meta = header.at("meta");
    for (const auto& entry : header.at("tensors")) {
      Shape shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto n = static_cast<std::size_t>(numel(shape));
      if (pos + offset + n * sizeof(Real) > body) throw FormatError(origin + ": tensor data out of range");
      std::vector<Real> data(n);
      if (n) std::memcpy(data.data(), bytes.data() + pos + offset, n * sizeof(Real));
      a.tensors.emplace(entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": bad archive header: " + e.what());
  }
  return a;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    os.flush();
    if (!os) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void save_archive(const std::filesystem::path& path, const Archive& archive) {
  write_file_atomic(path, encode_archive(archive));
}

Archive load_archive(const std::filesystem::path& path, const std::string& expected_kind) {
  if (!std::filesystem::exists(path)) throw Error("no such file: " + path.string());
  Archive a = decode_archive(read_file(path), path.string());
  if (!expected_kind.empty() && a.kind != expected_kind)
    throw FormatError(path.string() + ": expected a '" + expected_kind + "' archive, found '" + a.kind + "'");
  return a;
}

}  // namespace hdff
