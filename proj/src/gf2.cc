#include "sudoku/gf2.h"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <numeric>

#include "sudoku/error.h"

namespace sudoku {

std::vector<unsigned> BitMask::Indices() const {
  std::vector<unsigned> out;
  out.reserve(popcount());
  for (std::uint64_t rest = bits; rest != 0; rest &= rest - 1) {
    out.push_back(std::countr_zero(rest));
  }
  return out;
}

std::string FormatMask(BitMask mask) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "0x%010llx",
                static_cast<unsigned long long>(mask.bits));
  return buf;
}

std::optional<BitMask> ParseMask(std::string_view text) {
  if (text.size() >= 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
    text.remove_prefix(2);
  }
  if (text.empty() || text.size() > 16) return std::nullopt;
  std::uint64_t value = 0;
  for (char c : text) {
    int digit;
    if (c >= '0' && c <= '9') {
      digit = c - '0';
    } else if (c >= 'a' && c <= 'f') {
      digit = c - 'a' + 10;
    } else if (c >= 'A' && c <= 'F') {
      digit = c - 'A' + 10;
    } else {
      return std::nullopt;
    }
    value = (value << 4) | static_cast<std::uint64_t>(digit);
  }
  return BitMask(value);
}

Gf2System::Gf2System(std::vector<BitMask> functions)
    : functions_(std::move(functions)) {
  std::vector<BitMask> sorted = functions_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorKind::kInvalidArgument, "duplicate function mask");
  }
  for (BitMask f : functions_) universe_ |= f;
}

bool EchelonBasis::Insert(BitMask v) {
  v = Reduce(v);
  if (v.empty()) return false;
  const BitMask pivot = BitMask::Bit(v.lowest());
  for (BitMask& row : rows_) {
    if (!(row & pivot).empty()) row ^= v;
  }
  rows_.push_back(v);
  pivots_ |= pivot;
  return true;
}

BitMask EchelonBasis::Reduce(BitMask v) const {
  if ((v & pivots_).empty()) return v;
  for (BitMask row : rows_) {
    if (v.test(row.lowest())) v ^= row;
  }
  return v;
}

std::size_t Rank(std::span<const BitMask> rows) {
  EchelonBasis basis;
  for (BitMask r : rows) basis.Insert(r);
  return basis.rank();
}

std::size_t Rank(const Gf2System& system) { return Rank(system.functions()); }

std::vector<BitMask> NullspaceBasis(std::span<const BitMask> rows,
                                    BitMask universe) {
  EchelonBasis basis;
  for (BitMask r : rows) basis.Insert(r & universe);
  std::vector<BitMask> out;
  for (unsigned free_bit : (universe & ~basis.pivots()).Indices()) {
    BitMask delta = BitMask::Bit(free_bit);
    for (BitMask row : basis.rows()) {
      if (row.test(free_bit)) delta |= BitMask::Bit(row.lowest());
    }
    out.push_back(delta);
  }
  return out;
}

std::vector<BitMask> NullspaceBasis(const Gf2System& system) {
  return NullspaceBasis(system.functions(), system.bit_universe());
}

std::optional<BitMask> SolveDelta(std::span<const Constraint> constraints) {
  struct Row {
    BitMask mask;
    unsigned target;
  };
  std::vector<Row> rows;
  for (const Constraint& c : constraints) {
    Row next{c.mask, c.target & 1u};
    for (const Row& r : rows) {
      if (next.mask.test(r.mask.lowest())) {
        next.mask ^= r.mask;
        next.target ^= r.target;
      }
    }
    if (next.mask.empty()) {
      if (next.target != 0) return std::nullopt;
      continue;
    }
    const unsigned pivot = next.mask.lowest();
    for (Row& r : rows) {
      if (r.mask.test(pivot)) {
        r.mask ^= next.mask;
        r.target ^= next.target;
      }
    }
    rows.push_back(next);
  }
  BitMask delta;
  for (const Row& r : rows) {
    if (r.target != 0) delta |= BitMask::Bit(r.mask.lowest());
  }
  return delta;
}

std::vector<Gf2System> DisjointPartition(const Gf2System& system) {
  const auto& fns = system.functions();
  std::vector<std::size_t> parent(fns.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  // Owner function per address bit; joining through owners links every pair
  // of functions sharing a bit.
  std::vector<std::ptrdiff_t> owner(64, -1);
  for (std::size_t i = 0; i < fns.size(); ++i) {
    for (unsigned b : fns[i].Indices()) {
      if (owner[b] < 0) {
        owner[b] = static_cast<std::ptrdiff_t>(i);
      } else {
        const std::size_t a = find(static_cast<std::size_t>(owner[b]));
        const std::size_t c = find(i);
        if (a != c) parent[std::max(a, c)] = std::min(a, c);
      }
    }
  }
  std::vector<std::vector<BitMask>> groups;
  std::vector<std::ptrdiff_t> group_of(fns.size(), -1);
  for (std::size_t i = 0; i < fns.size(); ++i) {
    const std::size_t root = find(i);
    if (group_of[root] < 0) {
      group_of[root] = static_cast<std::ptrdiff_t>(groups.size());
      groups.emplace_back();
    }
    groups[group_of[root]].push_back(fns[i]);
  }
  std::vector<Gf2System> out;
  out.reserve(groups.size());
  for (auto& g : groups) out.emplace_back(std::move(g));
  return out;
}

bool SpanEqual(std::span<const BitMask> a, std::span<const BitMask> b) {
  EchelonBasis ba;
  EchelonBasis bb;
  for (BitMask v : a) ba.Insert(v);
  for (BitMask v : b) bb.Insert(v);
  if (ba.rank() != bb.rank()) return false;
  return std::all_of(b.begin(), b.end(),
                     [&](BitMask v) { return ba.Contains(v); });
}

bool SpanEqual(const Gf2System& a, const Gf2System& b) {
  return SpanEqual(a.functions(), b.functions());
}

std::vector<BitMask> EnumerateSpan(std::span<const BitMask> rows) {
  EchelonBasis basis;
  for (BitMask r : rows) basis.Insert(r);
  const std::size_t k = basis.rank();
  if (k > 24) {
    throw Error(ErrorKind::kInvalidArgument, "span too large to enumerate");
  }
  std::vector<BitMask> out;
  out.reserve((std::size_t{1} << k) - 1);
  BitMask current;
  // Gray code walk: step i flips basis row ctz(i).
  for (std::uint64_t i = 1; i < (std::uint64_t{1} << k); ++i) {
    current ^= basis.rows()[std::countr_zero(i)];
    out.push_back(current);
  }
  return out;
}

std::vector<BitMask> MinimumWeightCompletion(std::span<const BitMask> fixed,
                                             std::span<const BitMask> rows) {
  EchelonBasis basis;
  for (BitMask f : fixed) basis.Insert(f);
  std::vector<BitMask> chosen;
  if (Rank(rows) > 24) {
    for (BitMask r : rows) {
      if (basis.Insert(r)) chosen.push_back(r);
    }
    return chosen;
  }
  std::vector<BitMask> all = EnumerateSpan(rows);
  std::sort(all.begin(), all.end(), [](BitMask x, BitMask y) {
    if (x.popcount() != y.popcount()) return x.popcount() < y.popcount();
    return x.bits < y.bits;
  });
  EchelonBasis target;
  for (BitMask r : rows) target.Insert(r);
  for (BitMask f : fixed) target.Insert(f);
  for (BitMask v : all) {
    if (basis.rank() == target.rank()) break;
    if (basis.Insert(v)) chosen.push_back(v);
  }
  return chosen;
}

}  // namespace sudoku
