#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nowcast/date.hpp"
#include "nowcast/triangle.hpp"

namespace fixture {

inline nowcast::Date day(const char* iso) { return nowcast::parse_date(iso); }

// Triangle with the given rows; cells with t + d > T - 1 are left unobserved
// unless `full` is set.
inline nowcast::ReportingTriangle triangle(const std::vector<std::vector<std::int64_t>>& rows, bool full = false) {
  const int t_count = static_cast<int>(rows.size());
  const int d_count = static_cast<int>(rows.front().size());
  const auto origin = day("2020-03-02");
  nowcast::ReportingTriangle tri(t_count, d_count - 1, 7, origin, nowcast::add_days(origin, 7L * t_count),
                                 full ? nowcast::MaskShape::Full : nowcast::MaskShape::Triangular);
  for (int t = 0; t < t_count; ++t) {
    for (int d = 0; d < d_count; ++d) tri.set_count(t, d, rows[std::size_t(t)][std::size_t(d)]);
  }
  return tri;
}

// T x (D+1) triangle of Poisson-ish counts around `scale`.
inline nowcast::ReportingTriangle random_triangle(int num_bins, int max_delay, std::uint64_t seed,
                                                  double scale = 40.0) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::int64_t>> rows(std::size_t(num_bins), std::vector<std::int64_t>(std::size_t(max_delay + 1)));
  for (int t = 0; t < num_bins; ++t) {
    for (int d = 0; d <= max_delay; ++d) {
      std::poisson_distribution<std::int64_t> pois(scale * std::pow(0.55, d));
      rows[std::size_t(t)][std::size_t(d)] = pois(rng);
    }
  }
  return triangle(rows);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nowcast_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace fixture
