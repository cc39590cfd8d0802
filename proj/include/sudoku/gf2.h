#ifndef SUDOKU_GF2_H_
#define SUDOKU_GF2_H_

#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// GF(2) linear algebra over physical-address bitmasks. A mask selects the
// address bits that an XOR hash function folds into its single output bit;
// a system of masks is a binary matrix whose rows are the functions.

namespace sudoku {

using PhysAddr = std::uint64_t;

struct BitMask {
  std::uint64_t bits = 0;

  constexpr BitMask() = default;
  constexpr explicit BitMask(std::uint64_t b) : bits(b) {}

  static constexpr BitMask Bit(unsigned index) {
    return BitMask(std::uint64_t{1} << index);
  }
  // Bits [lo, hi).
  static constexpr BitMask Range(unsigned lo, unsigned hi) {
    const std::uint64_t upper =
        hi >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << hi) - 1;
    const std::uint64_t lower =
        lo >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << lo) - 1;
    return BitMask(upper & ~lower);
  }

  constexpr bool empty() const { return bits == 0; }
  constexpr int popcount() const { return std::popcount(bits); }
  constexpr bool test(unsigned index) const { return (bits >> index) & 1; }
  // Lowest / highest set bit; undefined on an empty mask.
  constexpr unsigned lowest() const { return std::countr_zero(bits); }
  constexpr unsigned highest() const { return 63 - std::countl_zero(bits); }

  constexpr BitMask operator^(BitMask o) const { return BitMask(bits ^ o.bits); }
  constexpr BitMask operator&(BitMask o) const { return BitMask(bits & o.bits); }
  constexpr BitMask operator|(BitMask o) const { return BitMask(bits | o.bits); }
  constexpr BitMask operator~() const { return BitMask(~bits); }
  constexpr BitMask& operator^=(BitMask o) { bits ^= o.bits; return *this; }
  constexpr BitMask& operator&=(BitMask o) { bits &= o.bits; return *this; }
  constexpr BitMask& operator|=(BitMask o) { bits |= o.bits; return *this; }

  friend constexpr auto operator<=>(BitMask, BitMask) = default;

  // Set bit indices in ascending order.
  std::vector<unsigned> Indices() const;
};

// Lowercase, 0x-prefixed, zero padded to at least ten hex digits.
std::string FormatMask(BitMask mask);
// Accepts 0x/0X prefixed or bare hex, any case. nullopt on garbage.
std::optional<BitMask> ParseMask(std::string_view text);

// Output bit of the XOR hash `mask` applied to `addr`.
constexpr unsigned Parity(BitMask mask, PhysAddr addr) {
  return static_cast<unsigned>(std::popcount(mask.bits & addr) & 1);
}

class Gf2System {
 public:
  Gf2System() = default;
  // Throws Error(kInvalidArgument) on duplicate masks.
  explicit Gf2System(std::vector<BitMask> functions);

  const std::vector<BitMask>& functions() const { return functions_; }
  BitMask bit_universe() const { return universe_; }
  std::size_t size() const { return functions_.size(); }
  bool empty() const { return functions_.empty(); }

  friend bool operator==(const Gf2System&, const Gf2System&) = default;

 private:
  std::vector<BitMask> functions_;
  BitMask universe_;
};

// Incremental echelon basis. Each stored row owns a distinct pivot, the
// lowest set bit of that row, and no other row contains that pivot bit.
class EchelonBasis {
 public:
  // Reduces `v` against the basis; inserts and returns true when independent.
  bool Insert(BitMask v);
  BitMask Reduce(BitMask v) const;
  bool Contains(BitMask v) const { return Reduce(v).empty(); }
  std::size_t rank() const { return rows_.size(); }
  const std::vector<BitMask>& rows() const { return rows_; }
  BitMask pivots() const { return pivots_; }

 private:
  std::vector<BitMask> rows_;
  BitMask pivots_;
};

std::size_t Rank(std::span<const BitMask> rows);
std::size_t Rank(const Gf2System& system);

// Basis of {d within `universe` : Parity(f, d) == 0 for every f}. Built from
// the reduced row-echelon form with lowest-bit pivots, so every returned
// vector has a distinct highest set bit (its free variable).
std::vector<BitMask> NullspaceBasis(std::span<const BitMask> rows,
                                    BitMask universe);
std::vector<BitMask> NullspaceBasis(const Gf2System& system);

struct Constraint {
  BitMask mask;
  unsigned target = 0;
};

// Address delta d with Parity(mask_i, d) == target_i for every constraint.
// Free variables are fixed to zero. nullopt when the constraints contradict.
std::optional<BitMask> SolveDelta(std::span<const Constraint> constraints);

// Connected components of the "shares a bit" relation, in order of each
// component's first function.
std::vector<Gf2System> DisjointPartition(const Gf2System& system);

bool SpanEqual(std::span<const BitMask> a, std::span<const BitMask> b);
bool SpanEqual(const Gf2System& a, const Gf2System& b);

// Every nonzero vector of span(rows); requires rank <= 24.
std::vector<BitMask> EnumerateSpan(std::span<const BitMask> rows);

// Minimum-weight basis of span(rows) modulo span(fixed): vectors are taken
// by ascending (popcount, value) while they stay independent of `fixed` and
// of those already chosen. Falls back to the echelon rows above rank 24.
std::vector<BitMask> MinimumWeightCompletion(std::span<const BitMask> fixed,
                                             std::span<const BitMask> rows);

}  // namespace sudoku

#endif  // SUDOKU_GF2_H_
