#ifndef SUDOKU_GROUND_TRUTH_H_
#define SUDOKU_GROUND_TRUTH_H_

#include <string>
#include <string_view>
#include <vector>

#include "sudoku/mapping.h"

namespace sudoku {

// Published ground-truth mappings for the Intel-A, Intel-B/C and AMD-A
// platforms in 1/2 channel x 1/2 DIMM-per-channel configurations. Names follow
// data/mappings/<name>.map.
struct NamedMapping {
  std::string name;
  DramAddressMapping mapping;
};

const std::vector<NamedMapping>& GroundTruthMappings();
// Throws Error(kInvalidArgument) for an unknown name.
const DramAddressMapping& GroundTruth(std::string_view name);

}  // namespace sudoku

#endif  // SUDOKU_GROUND_TRUTH_H_
