#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fairgrid {

struct invalid_parameter : std::invalid_argument {
  explicit invalid_parameter(const std::string& what) : std::invalid_argument(what) {}
};

// A group with zero observed mass; frequencies and t-vectors are undefined for it.
struct degenerate_group : std::runtime_error {
  explicit degenerate_group(const std::string& what) : std::runtime_error(what) {}
};

struct rank_deficient : std::runtime_error {
  explicit rank_deficient(const std::string& what) : std::runtime_error(what) {}
};

struct value_out_of_range : std::out_of_range {
  explicit value_out_of_range(const std::string& what) : std::out_of_range(what) {}
};

struct parse_error : std::runtime_error {
  parse_error(const std::string& what, std::size_t row, std::size_t col)
      : std::runtime_error(what + " (row " + std::to_string(row) + ", column " +
                           std::to_string(col) + ")"),
        row(row),
        col(col) {}
  std::size_t row;
  std::size_t col;
};

namespace detail {

// Pairwise reduction of term(lo) + ... + term(hi - 1); keeps the rounding error
// of pool averages at O(log n) so that finite-difference checks stay sharp.
template <typename T, typename F>
T pairwise_sum(std::size_t lo, std::size_t hi, F&& term) {
  if (hi <= lo) throw invalid_parameter("pairwise_sum: empty range");
  if (hi - lo <= 8) {
    T acc = term(lo);
    for (std::size_t i = lo + 1; i < hi; ++i) acc += term(i);
    return acc;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  T acc = pairwise_sum<T>(lo, mid, term);
  acc += pairwise_sum<T>(mid, hi, term);
  return acc;
}

}  // namespace detail
}  // namespace fairgrid
