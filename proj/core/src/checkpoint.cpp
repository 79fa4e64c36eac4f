#include "dmrn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace dmrn {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "DMRNCKPT";

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

template <typename T>
void append_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U u;
  std::memcpy(&u, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

template <typename T>
T read_le(const char* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    u |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  T value;
  std::memcpy(&value, &u, sizeof(T));
  return value;
}

json config_to_json(const BackboneConfig& c) {
  return {{"input_size", c.input_size},
          {"input_channels", c.input_channels},
          {"stage_channels", c.stage_channels},
          {"blocks_per_stage", c.blocks_per_stage}};
}

BackboneConfig config_from_json(const json& j) {
  BackboneConfig c;
  c.input_size = j.at("input_size").get<std::size_t>();
  c.input_channels = j.at("input_channels").get<std::size_t>();
  c.stage_channels = j.at("stage_channels").get<std::array<std::size_t, kStageCount>>();
  c.blocks_per_stage = j.at("blocks_per_stage").get<std::size_t>();
  return c;
}

template <typename T, typename F>
void for_each_record(ModelParams<T>& params, F&& f) {
  params.for_each_parameter([&](const std::string& name, Tensor<T>& t) { f(name, "param", t); });
  params.for_each_buffer([&](const std::string& name, Tensor<T>& t) { f(name, "buffer", t); });
}

}  // namespace

template <typename T>
std::string encode_checkpoint(ModelParams<T>& params) {
  json records = json::array();
  std::string data;
  for_each_record(params, [&](const std::string& name, const char* kind, Tensor<T>& t) {
    records.push_back({{"name", name},
                       {"kind", kind},
                       {"shape", t.shape()},
                       {"offset", data.size()},
                       {"count", t.numel()}});
    for (T v : t.data()) append_le(data, v);
  });
  const json manifest = {{"version", 1},
                         {"dtype", dtype_name<T>()},
                         {"config", config_to_json(params.config)},
                         {"records", records},
                         {"data_bytes", data.size()}};
  const std::string text = manifest.dump();
  std::string out(kMagic);
  append_le<std::uint64_t>(out, text.size());
  out += text;
  out += data;
  return out;
}

template <typename T>
ModelParams<T> decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size() + 8 || bytes.substr(0, kMagic.size()) != kMagic) {
    throw DataError("checkpoint: missing DMRNCKPT header");
  }
  const auto manifest_len = read_le<std::uint64_t>(bytes.data() + kMagic.size());
  const std::size_t manifest_begin = kMagic.size() + 8;
  if (manifest_len > bytes.size() - manifest_begin) {
    throw DataError("checkpoint: manifest length exceeds file size (truncated file?)");
  }
  json manifest;
  try {
    manifest = json::parse(bytes.substr(manifest_begin, manifest_len));
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: corrupt manifest: ") + e.what());
  }
  const std::string_view data = bytes.substr(manifest_begin + manifest_len);

  ModelParams<T> params;
  try {
    if (manifest.at("dtype").get<std::string>() != dtype_name<T>()) {
      throw DataError("checkpoint: dtype " + manifest.at("dtype").get<std::string>() +
                      " does not match requested " + dtype_name<T>());
    }
    const BackboneConfig config = config_from_json(manifest.at("config"));
    params = init_params<T>(config, 0);
    const auto& records = manifest.at("records");
    if (manifest.at("data_bytes").get<std::size_t>() != data.size()) {
      throw DataError("checkpoint: data section has " + std::to_string(data.size()) +
                      " bytes, manifest declares " +
                      std::to_string(manifest.at("data_bytes").get<std::size_t>()) +
                      " (truncated file?)");
    }
    std::size_t index = 0;
    std::size_t expected_offset = 0;
    for_each_record(params, [&](const std::string& name, const char* kind, Tensor<T>& t) {
      if (index >= records.size()) {
        throw DataError("checkpoint: record '" + name + "' missing from manifest");
      }
      const json& r = records[index++];
      const std::string rname = r.at("name").get<std::string>();
      if (rname != name || r.at("kind").get<std::string>() != kind) {
        throw DataError("checkpoint: record '" + rname + "' found where '" + name +
                        "' was expected");
      }
      if (r.at("shape").get<Shape>() != t.shape()) {
        throw DataError("checkpoint: record '" + name + "' has shape " +
                        shape_to_string(r.at("shape").get<Shape>()) + ", expected " +
                        shape_to_string(t.shape()));
      }
      const auto offset = r.at("offset").get<std::size_t>();
      const auto count = r.at("count").get<std::size_t>();
      if (offset != expected_offset || count != t.numel() ||
          offset + count * sizeof(T) > data.size()) {
        throw DataError("checkpoint: record '" + name + "' has inconsistent offset/count");
      }
      auto dst = t.data();
      for (std::size_t i = 0; i < count; ++i) {
        dst[i] = read_le<T>(data.data() + offset + i * sizeof(T));
      }
      expected_offset = offset + count * sizeof(T);
    });
    if (index != records.size()) {
      throw DataError("checkpoint: unexpected extra record '" +
                      records[index].at("name").get<std::string>() + "'");
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: corrupt manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: invalid model config: ") + e.what());
  }
  return params;
}

template <typename T>
void save_checkpoint(ModelParams<T>& params, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to checkpoint " + path.string());
}

template <typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint<T>(bytes);
}

template std::string encode_checkpoint(ModelParams<float>&);
template std::string encode_checkpoint(ModelParams<double>&);
template ModelParams<float> decode_checkpoint(std::string_view);
template ModelParams<double> decode_checkpoint(std::string_view);
template void save_checkpoint(ModelParams<float>&, const std::filesystem::path&);
template void save_checkpoint(ModelParams<double>&, const std::filesystem::path&);
template ModelParams<float> load_checkpoint(const std::filesystem::path&);
template ModelParams<double> load_checkpoint(const std::filesystem::path&);

}  // namespace dmrn
