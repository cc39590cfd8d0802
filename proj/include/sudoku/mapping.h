#ifndef SUDOKU_MAPPING_H_
#define SUDOKU_MAPPING_H_

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sudoku/gf2.h"

namespace sudoku {

// DIMM and rank share one class: consecutive-access timing cannot separate
// them when the two tRDRD variants coincide.
enum class ComponentClass {
  kChannel,
  kSubChannel,
  kDimmRank,
  kBankGroup,
  kBankAddress,
  kRow,
  kColumn,
  kUnassigned,
};

// Classes that carry addressing functions, in mapping-file order.
inline constexpr std::array<ComponentClass, 6> kFunctionClasses = {
    ComponentClass::kChannel,   ComponentClass::kSubChannel,
    ComponentClass::kDimmRank,  ComponentClass::kBankGroup,
    ComponentClass::kBankAddress, ComponentClass::kUnassigned,
};

std::string_view ClassName(ComponentClass c);
std::optional<ComponentClass> ClassFromName(std::string_view name);

struct AddressingFunction {
  BitMask mask;
  ComponentClass label = ComponentClass::kUnassigned;

  friend bool operator==(const AddressingFunction&,
                         const AddressingFunction&) = default;
};

inline constexpr unsigned kDefaultAddrWidth = 37;
inline constexpr unsigned kDefaultOffsetBits = 6;

struct DramAddressMapping {
  std::vector<AddressingFunction> functions;
  BitMask row_mask;
  BitMask col_mask;
  unsigned offset_bits = kDefaultOffsetBits;
  unsigned addr_width = kDefaultAddrWidth;

  friend bool operator==(const DramAddressMapping&,
                         const DramAddressMapping&) = default;

  std::vector<BitMask> FunctionMasks() const;
  std::vector<BitMask> FunctionsOf(ComponentClass c) const;
  // Union of all function, row and column bits.
  BitMask BitUniverse() const;
  // Bits a function mask may use: [offset_bits, addr_width).
  BitMask UsableBits() const {
    return BitMask::Range(offset_bits, addr_width);
  }
};

// Throws Error(kInvalidMapping) when a structural invariant is broken: zero
// function mask, mask outside UsableBits(), or overlapping row/column masks.
// Duplicate function masks are allowed here and rejected by the loader.
void ValidateStructure(const DramAddressMapping& mapping);

struct DramCoordinate {
  std::uint64_t channel = 0;
  std::uint64_t subchannel = 0;
  std::uint64_t dimm_rank = 0;
  std::uint64_t bank_group = 0;
  std::uint64_t bank_address = 0;
  std::uint64_t unassigned = 0;
  std::uint64_t row = 0;
  std::uint64_t column = 0;

  friend bool operator==(const DramCoordinate&,
                         const DramCoordinate&) = default;

  std::uint64_t Index(ComponentClass c) const;
};

// Gathers the bits of `addr` selected by `mask` into the low end of the
// result, lowest selected bit first.
std::uint64_t CompactBits(PhysAddr addr, BitMask mask);

DramCoordinate Decode(const DramAddressMapping& mapping, PhysAddr addr);

// For kRow / kColumn compares those indices; for a function class compares
// that class's index. SameBank compares every function class at once.
bool SameComponent(const DramAddressMapping& mapping, PhysAddr a, PhysAddr b,
                   ComponentClass c);
bool SameBank(const DramAddressMapping& mapping, PhysAddr a, PhysAddr b);

struct SubsystemReport {
  Gf2System subsystem;
  // Address bits the subsystem covers; may exceed subsystem.bit_universe()
  // for bits no function, row or column decodes.
  BitMask bits;
  std::size_t bit_count = 0;
  std::size_t rank = 0;
  bool injective = false;
};

// The system of every function mask plus one single-bit row per row bit and
// per column bit, split into bit-disjoint subsystems. Bits of `universe`
// outside the system are reported as one-bit subsystems of rank 0, so a
// deleted function whose bits appear nowhere else still shows as a deficit.
Gf2System InjectivitySystem(const DramAddressMapping& mapping);
std::vector<SubsystemReport> InjectivityCheck(const DramAddressMapping& mapping,
                                              BitMask universe = BitMask());
bool IsInjective(const DramAddressMapping& mapping,
                 BitMask universe = BitMask());

// Nullspace basis of a deficient subsystem. Each returned delta has a
// distinct highest bit; promoting that bit to a row or column bit (or adding
// any mask with odd parity on the delta as a function) raises the rank by
// one. Throws Error(kAlreadyInjective) for an injective report.
std::vector<BitMask> SuggestMissing(const SubsystemReport& report);

// Text format: `key = value` lines, '#' comments. Function keys are
// repeatable and carry a `[]` suffix; order of function lines is preserved.
DramAddressMapping LoadMapping(std::string_view text);
std::string StoreMapping(const DramAddressMapping& mapping);
DramAddressMapping LoadMappingFile(const std::string& path);

}  // namespace sudoku

#endif  // SUDOKU_MAPPING_H_
