#pragma once

#include <string>

#include "boxdiff/autodiff.hpp"

namespace boxdiff {

/// Text checkpoint: a version header, the optimizer step count, then one
/// (name, shape, values) record per tensor. Parameter values are written
/// with 17 significant digits so save/load round-trips bit-exactly; AdamW
/// moments ride along as "<name>::m" / "<name>::v" records and are optional
/// on load.
void save_checkpoint(const ParamStore& store, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

}  // namespace boxdiff
