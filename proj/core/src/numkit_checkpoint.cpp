// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#include "dvpo/numkit/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace dvpo::numkit {

namespace {

constexpr char kMagic[8] = {'D', 'V', 'P', 'O', 'C', 'K', 'P', 'T'};

void writeRaw(std::ofstream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void readRaw(std::ifstream& in, void* data, std::size_t n, const char* what) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    throw IoError(std::string("checkpoint: truncated file while reading ") + what);
  }
}

}  // namespace

void saveCheckpoint(const std::filesystem::path& path, const ParamSet& params,
                    std::uint64_t opSetHash, const nlohmann::json& extra) {
  nlohmann::json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["op_set_hash"] = opSetHash;
  header["extra"] = extra;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : params.entries()) {
    entries.push_back({{"name", e.name}, {"shape", e.value.shape()}});
  }
  header["entries"] = std::move(entries);
  const std::string headerText = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open '" + path.string() + "' for writing");
  writeRaw(out, kMagic, sizeof(kMagic));
  const std::uint32_t version = kCheckpointFormatVersion;
  writeRaw(out, &version, sizeof(version));
  const std::uint64_t headerLen = headerText.size();
  writeRaw(out, &headerLen, sizeof(headerLen));
  writeRaw(out, headerText.data(), headerText.size());
  for (const auto& e : params.entries()) {
    writeRaw(out, e.value.data(), e.value.size() * sizeof(double));
  }
  out.flush();
  if (!out) throw IoError("checkpoint: write failed for '" + path.string() + "'");
}

CheckpointData loadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path.string() + "'");

  char magic[8];
  readRaw(in, magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("checkpoint: bad magic in '" + path.string() + "'");
  }
  std::uint32_t version = 0;
  readRaw(in, &version, sizeof(version), "version");
  if (version != kCheckpointFormatVersion) {
    throw IoError("checkpoint: unsupported format version " + std::to_string(version));
  }
  std::uint64_t headerLen = 0;
  readRaw(in, &headerLen, sizeof(headerLen), "header length");
  if (headerLen > (1ull << 30)) throw IoError("checkpoint: implausible header length");
  std::string headerText(headerLen, '\0');
  readRaw(in, headerText.data(), headerLen, "header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(headerText);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: corrupt header: ") + e.what());
  }

  CheckpointData data;
  data.opSetHash = header.value("op_set_hash", std::uint64_t{0});
  data.extra = header.value("extra", nlohmann::json::object());
  for (const auto& entry : header.at("entries")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    RealArray value(shape);
    readRaw(in, value.data(), value.size() * sizeof(double), name.c_str());
    value.requireFinite("checkpoint entry '" + name + "'");
    data.params.add(name, std::move(value));
  }
  return data;
}

}  // namespace dvpo::numkit
