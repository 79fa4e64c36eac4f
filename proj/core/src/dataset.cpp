#include "dmrn/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

namespace dmrn {

using nlohmann::json;
namespace fs = std::filesystem;

std::size_t Dataset::slice_count() const {
  std::size_t n = 0;
  for (const auto& s : studies) n += s.slices.size();
  return n;
}

std::vector<int> Dataset::study_labels() const {
  std::vector<int> out;
  out.reserve(studies.size());
  for (const auto& s : studies) out.push_back(s.label);
  return out;
}

std::vector<std::size_t> Dataset::slices_per_class() const {
  std::vector<std::size_t> out(num_classes, 0);
  for (const auto& s : studies) out[static_cast<std::size_t>(s.label)] += s.slices.size();
  return out;
}

std::vector<std::size_t> Dataset::studies_per_class() const {
  std::vector<std::size_t> out(num_classes, 0);
  for (const auto& s : studies) ++out[static_cast<std::size_t>(s.label)];
  return out;
}

std::vector<SliceRef> collect_slices(const Dataset& data,
                                     std::span<const std::size_t> study_indices) {
  std::vector<SliceRef> out;
  for (std::size_t i : study_indices) {
    const Study& study = data.studies.at(i);
    for (const Slice& slice : study.slices) out.push_back({&study, &slice});
  }
  return out;
}

template <typename T>
Tensor<T> stack_images(std::span<const SliceRef> slices) {
  if (slices.empty()) throw ContractError("stack_images: no slices");
  const Shape& s = slices[0].slice->image.shape();
  Shape shape{slices.size()};
  shape.insert(shape.end(), s.begin(), s.end());
  Tensor<T> out(shape);
  const std::size_t per = shape_numel(s);
  auto dst = out.data();
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const auto& img = slices[i].slice->image;
    if (img.shape() != s) {
      throw ShapeError("stack_images: slice " + slices[i].slice->id + " has shape " +
                       shape_to_string(img.shape()) + ", expected " + shape_to_string(s));
    }
    std::copy(img.data().begin(), img.data().end(), dst.begin() + i * per);
  }
  return out;
}

template Tensor<float> stack_images(std::span<const SliceRef>);
template Tensor<double> stack_images(std::span<const SliceRef>);

namespace {

std::vector<char> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<float> decode_f32_le(const std::vector<char>& bytes) {
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    std::memcpy(&out[i], &u, 4);
  }
  return out;
}

void write_f32_le(const fs::path& path, std::span<const float> values) {
  std::vector<char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, &values[i], 4);
    if constexpr (std::endian::native == std::endian::big) u = __builtin_bswap32(u);
    std::memcpy(bytes.data() + 4 * i, &u, 4);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

}  // namespace

Dataset load_dataset(const fs::path& root) {
  const fs::path manifest_path = root / "manifest.json";
  json m;
  try {
    const auto bytes = read_bytes(manifest_path);
    m = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }

  Dataset data;
  try {
    if (m.at("format").get<std::string>() != "dmrn-dataset") {
      throw DataError(manifest_path.string() + ": not a dmrn dataset manifest");
    }
    data.num_classes = m.at("num_classes").get<std::size_t>();
    data.class_names = m.value("class_names", std::vector<std::string>{});
    data.image_shape = m.at("image_shape").get<Shape>();
    if (m.contains("generator")) data.provenance = m["generator"].dump();
    for (const auto& js : m.at("studies")) {
      Study study;
      study.id = js.at("id").get<std::string>();
      study.label = js.at("class").get<int>();
      if (study.label < 0 || static_cast<std::size_t>(study.label) >= data.num_classes) {
        throw DataError("study " + study.id + ": class " + std::to_string(study.label) +
                        " outside 0.." + std::to_string(data.num_classes - 1));
      }
      const Shape shape = js.value("shape", data.image_shape);
      for (const auto& file : js.at("slices")) {
        Slice slice;
        slice.file = file.get<std::string>();
        slice.id = fs::path(slice.file).replace_extension().generic_string();
        const auto bytes = read_bytes(root / slice.file);
        if (bytes.size() != shape_numel(shape) * 4) {
          throw DataError("slice " + slice.file + ": " + std::to_string(bytes.size()) +
                          " bytes, expected " + std::to_string(shape_numel(shape) * 4) +
                          " for shape " + shape_to_string(shape));
        }
        slice.image = Tensor<float>(shape, decode_f32_le(bytes));
        study.slices.push_back(std::move(slice));
      }
      if (study.slices.empty()) throw DataError("study " + study.id + " has no slices");
      data.studies.push_back(std::move(study));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  return data;
}

void save_dataset(const Dataset& data, const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw DataError("cannot create " + root.string() + ": " + ec.message());

  json studies = json::array();
  for (const Study& study : data.studies) {
    json files = json::array();
    for (const Slice& slice : study.slices) {
      const fs::path path = root / slice.file;
      fs::create_directories(path.parent_path(), ec);
      if (ec) throw DataError("cannot create " + path.parent_path().string());
      write_f32_le(path, slice.image.data());
      files.push_back(slice.file);
    }
    const Shape shape = study.slices.empty() ? data.image_shape
                                             : study.slices.front().image.shape();
    studies.push_back({{"id", study.id}, {"class", study.label}, {"shape", shape},
                       {"slices", files}});
  }

  json m = {{"format", "dmrn-dataset"},
            {"version", 1},
            {"num_classes", data.num_classes},
            {"class_names", data.class_names},
            {"image_shape", data.image_shape},
            {"studies", studies}};
  if (!data.provenance.empty()) m["generator"] = json::parse(data.provenance);

  const fs::path tmp = root / "manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << m.dump(1) << '\n';
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, root / "manifest.json", ec);
  if (ec) throw DataError("cannot finalize manifest in " + root.string() + ": " + ec.message());
}

namespace {

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ULL;
  void update(const std::vector<char>& bytes) {
    for (char c : bytes) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
  }
};

}  // namespace

std::uint64_t dataset_hash(const fs::path& root) {
  Fnv1a fnv;
  const auto manifest = read_bytes(root / "manifest.json");
  fnv.update(manifest);
  json m;
  try {
    m = json::parse(manifest.begin(), manifest.end());
    for (const auto& js : m.at("studies")) {
      for (const auto& file : js.at("slices")) {
        fnv.update(read_bytes(root / file.get<std::string>()));
      }
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest in " + root.string() + ": " + e.what());
  }
  return fnv.h;
}

Tensor<float> read_pgm(const fs::path& path) {
  const auto bytes = read_bytes(path);
  std::size_t pos = 0;
  auto next_token = [&]() {
    std::string tok;
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        ++pos;
      } else {
        tok += c;
        ++pos;
      }
    }
    if (tok.empty()) throw DataError(path.string() + ": truncated PGM header");
    return tok;
  };
  auto next_int = [&]() {
    const std::string tok = next_token();
    try {
      return std::stoul(tok);
    } catch (const std::exception&) {
      throw DataError(path.string() + ": bad PGM header field '" + tok + "'");
    }
  };

  const std::string magic = next_token();
  if (magic != "P5" && magic != "P2") throw DataError(path.string() + ": not a PGM file");
  const std::size_t width = next_int(), height = next_int(), maxval = next_int();
  if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) {
    throw DataError(path.string() + ": invalid PGM dimensions");
  }
  Tensor<float> img(Shape{1, height, width});
  auto d = img.data();
  const float scale = 1.0f / static_cast<float>(maxval);
  if (magic == "P2") {
    for (float& v : d) v = static_cast<float>(next_int()) * scale;
    return img;
  }
  ++pos;  // single whitespace after maxval
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (bytes.size() < pos + d.size() * bpp) throw DataError(path.string() + ": truncated PGM data");
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos + i * bpp);
    const unsigned v = bpp == 2 ? (p[0] << 8) | p[1] : p[0];
    d[i] = static_cast<float>(v) * scale;
  }
  return img;
}

}  // namespace dmrn
