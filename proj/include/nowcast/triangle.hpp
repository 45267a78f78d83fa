#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nowcast/date.hpp"

namespace nowcast {

struct SnapshotRow {
  Date event_date;
  std::int64_t cumulative_count = 0;
};

// One dated data release: cumulative counts per event date as known on
// `release_date`. Rows are sorted by event date and unique.
struct ReleaseSnapshot {
  Date release_date;
  std::vector<SnapshotRow> rows;

  std::int64_t total() const;
};

enum class MaskShape { Triangular, Full };

// Counts n[t][d] over time bin t and delay bin d (0..max_delay). The final
// delay column holds every increment reported at delay >= max_delay.
class ReportingTriangle {
 public:
  ReportingTriangle() = default;
  ReportingTriangle(int num_bins, int max_delay, int bin_width, Date origin, Date now,
                    MaskShape shape = MaskShape::Triangular);

  int num_bins() const noexcept { return num_bins_; }
  int max_delay() const noexcept { return max_delay_; }
  int num_delays() const noexcept { return max_delay_ + 1; }
  int bin_width() const noexcept { return bin_width_; }
  Date origin() const noexcept { return origin_; }
  Date now() const noexcept { return now_; }
  Date bin_start(int t) const { return add_days(origin_, static_cast<long>(t) * bin_width_); }
  std::size_t num_cells() const noexcept { return counts_.size(); }
  std::size_t cell(int t, int d) const {
    return static_cast<std::size_t>(t) * static_cast<std::size_t>(num_delays()) +
           static_cast<std::size_t>(d);
  }

  std::int64_t count(int t, int d) const { return counts_[cell(t, d)]; }
  bool observed(int t, int d) const { return mask_[cell(t, d)] != 0; }
  void set_count(int t, int d, std::int64_t value);
  void set_observed(int t, int d, bool value) { mask_[cell(t, d)] = value ? 1 : 0; }

  // Flattened time-major views: index t * (max_delay + 1) + d.
  const std::vector<std::int64_t>& counts() const noexcept { return counts_; }
  const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }
  std::size_t observed_cells() const;

  int negatives_clamped() const noexcept { return negatives_clamped_; }
  void set_negatives_clamped(int n) noexcept { negatives_clamped_ = n; }

  bool operator==(const ReportingTriangle&) const = default;

 private:
  int num_bins_ = 0;
  int max_delay_ = 0;
  int bin_width_ = 7;
  Date origin_{};
  Date now_{};
  int negatives_clamped_ = 0;
  std::vector<std::int64_t> counts_;
  std::vector<std::uint8_t> mask_;
};

enum class Provenance { Raw, Truth, NowcastDraw };

struct MarginalSeries {
  std::vector<double> values;
  Provenance provenance = Provenance::Raw;
};

struct TriangleOptions {
  int max_delay = 10;
  int bin_width = 7;
  Date now{};
  // Start of bin 0. Defaults to the earliest event date in the snapshots;
  // events before the origin are dropped.
  std::optional<Date> origin;
};

struct DelayDistribution {
  Eigen::MatrixXd fractions;     // T x (D+1)
  std::vector<bool> zero_row;    // flagged rows with no counts
};

// Parses a `event_date,count` file body. Rows come back sorted.
ReleaseSnapshot parse_release(std::string_view text, Date release_date,
                              std::string_view source = "<release>");
ReleaseSnapshot load_release_file(const std::filesystem::path& path, Date release_date);

// Manifest: header `release_date,path`; relative paths resolve against the
// manifest's directory. Returned snapshots are sorted by release date.
std::vector<ReleaseSnapshot> load_manifest(const std::filesystem::path& path);

ReportingTriangle build_triangle(std::span<const ReleaseSnapshot> snapshots,
                                 const TriangleOptions& options);

MarginalSeries marginal_totals(const ReportingTriangle& tri);

DelayDistribution delay_distribution(const ReportingTriangle& tri);

// Fraction of all observed counts reported at delay <= d, over the whole
// triangle.
std::vector<double> cumulative_delay_fraction(const ReportingTriangle& tri);

// Totals per time bin taken from one snapshot (used for ground truth).
std::vector<double> binned_totals(const ReleaseSnapshot& snapshot, Date origin, int bin_width,
                                  int num_bins);

// Inverse of build_triangle: cumulative releases at every bin boundary
// 1..num_releases produced from complete per-cell counts (row-major T x (D+1)).
// Event dates are the first day of each bin.
std::vector<ReleaseSnapshot> snapshots_from_counts(std::span<const std::int64_t> counts,
                                                   int num_bins, int max_delay, int bin_width,
                                                   Date origin, int num_releases);

void write_triangle(std::ostream& out, const ReportingTriangle& tri);
ReportingTriangle read_triangle(std::istream& in, std::string_view source = "<triangle>");
ReportingTriangle load_triangle(const std::filesystem::path& path);

void write_release(std::ostream& out, const ReleaseSnapshot& snapshot);

}  // namespace nowcast
