#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dmrn/tensor.hpp"

namespace dmrn {

/// One 2D image, shape [C,H,W].
struct Slice {
  std::string id;
  std::string file;  // relative to the dataset root
  Tensor<float> image;
};

/// A scan: one class label and one or more slices.
struct Study {
  std::string id;
  int label = 0;
  std::vector<Slice> slices;
};

struct Dataset {
  std::size_t num_classes = 0;
  std::vector<std::string> class_names;
  Shape image_shape;  // [C,H,W]
  std::vector<Study> studies;
  /// Free-form JSON text describing how the data was produced; may be empty.
  std::string provenance;

  std::size_t slice_count() const;
  std::vector<int> study_labels() const;
  std::vector<std::size_t> slices_per_class() const;
  std::vector<std::size_t> studies_per_class() const;
};

/// Non-owning view of a slice together with its study.
struct SliceRef {
  const Study* study = nullptr;
  const Slice* slice = nullptr;
  int label() const { return study->label; }
};

/// All slices of the selected studies, in study then slice order.
std::vector<SliceRef> collect_slices(const Dataset& data,
                                     std::span<const std::size_t> study_indices);

/// Stacks [C,H,W] images into a batch [N,C,H,W].
template <typename T = float>
Tensor<T> stack_images(std::span<const SliceRef> slices);

/// Reads root/manifest.json and every slice file (raw little-endian float32).
/// Throws DataError on missing files, size mismatches or bad manifests.
Dataset load_dataset(const std::filesystem::path& root);

/// Writes slice files first, then the manifest (via rename, so a reader
/// never sees a manifest pointing at missing slices).
void save_dataset(const Dataset& data, const std::filesystem::path& root);

/// FNV-1a over the manifest and every slice file, in manifest order.
std::uint64_t dataset_hash(const std::filesystem::path& root);

/// Reads a binary (P5) or ASCII (P2) greymap into [1,H,W] scaled to [0,1].
Tensor<float> read_pgm(const std::filesystem::path& path);

}  // namespace dmrn
