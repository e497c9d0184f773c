#pragma once

#include <filesystem>
#include <iosfwd>

#include "ernn/cells.hpp"

namespace ernn {

// Versioned text checkpoint:
//
//   ernn-ckpt v1
//   <cell_kind> <n> <d> <T> <K> <C> <activation>
//   U <rows> <cols>
//   <row-major values, one matrix row per line>
//   V ... W ... b ... eta ... cw ... cb ...
//
// Values carry 17 significant digits so a save/load round trip is exact.
// Vectors are written as single-column blocks.

void write_checkpoint(std::ostream& out, const ErnnParams& params);
void save_checkpoint(const std::filesystem::path& path, const ErnnParams& params);

/// Throws FormatError on a bad header, version, block label, dimension or value.
ErnnParams read_checkpoint(std::istream& in);
ErnnParams load_checkpoint(const std::filesystem::path& path);

}  // namespace ernn
