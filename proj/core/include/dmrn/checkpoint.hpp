#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "dmrn/model.hpp"

namespace dmrn {

/// Checkpoint layout:
///
///   "DMRNCKPT"                    8-byte magic
///   uint64 little-endian          manifest length L
///   L bytes of JSON               {version, dtype, config, records:[{name, kind,
///                                  shape, offset, count}], data_bytes}
///   raw little-endian values      records back to back; offsets in bytes
///                                  from the start of this section
///
/// Parameters come first, then batch-norm running statistics, each in
/// ModelParams visiting order.
template <typename T>
std::string encode_checkpoint(ModelParams<T>& params);

/// Throws DataError naming the offending record on any inconsistency.
template <typename T>
ModelParams<T> decode_checkpoint(std::string_view bytes);

template <typename T>
void save_checkpoint(ModelParams<T>& params, const std::filesystem::path& path);

template <typename T>
ModelParams<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace dmrn
