#include "nowcast/triangle.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "nowcast/csv.hpp"
#include "nowcast/error.hpp"

namespace nowcast {

namespace {

bool parse_int64(std::string_view text, std::int64_t& out) {
  text = csv::trim(text);
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

long floor_div(long a, long b) {
  long q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

std::int64_t ReleaseSnapshot::total() const {
  std::int64_t sum = 0;
  for (const auto& row : rows) sum += row.cumulative_count;
  return sum;
}

ReportingTriangle::ReportingTriangle(int num_bins, int max_delay, int bin_width, Date origin,
                                     Date now, MaskShape shape)
    : num_bins_(num_bins),
      max_delay_(max_delay),
      bin_width_(bin_width),
      origin_(origin),
      now_(now) {
  if (num_bins < 1 || max_delay < 1 || bin_width < 1) {
    throw DomainError("triangle needs num_bins >= 1, max_delay >= 1, bin_width >= 1");
  }
  const auto cells = static_cast<std::size_t>(num_bins) * static_cast<std::size_t>(max_delay + 1);
  counts_.assign(cells, 0);
  mask_.assign(cells, 0);
  for (int t = 0; t < num_bins; ++t) {
    for (int d = 0; d <= max_delay; ++d) {
      const bool obs = shape == MaskShape::Full || t + d <= num_bins - 1;
      mask_[cell(t, d)] = obs ? 1 : 0;
    }
  }
}

void ReportingTriangle::set_count(int t, int d, std::int64_t value) {
  if (value < 0) throw DomainError("negative cell count");
  counts_[cell(t, d)] = value;
}

std::size_t ReportingTriangle::observed_cells() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

ReleaseSnapshot parse_release(std::string_view text, Date release_date, std::string_view source) {
  const std::string src(source);
  ReleaseSnapshot snap;
  snap.release_date = release_date;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  std::map<Date, std::size_t> seen;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = csv::trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    const auto fields = csv::split(line);
    if (!header_seen) {
      if (fields.size() != 2 || fields[0] != "event_date" || fields[1] != "count") {
        throw ParseError(src, line_no, "expected header 'event_date,count'");
      }
      header_seen = true;
      if (end == text.size()) break;
      continue;
    }
    if (fields.size() != 2) throw ParseError(src, line_no, "expected 2 fields");
    const auto date = try_parse_date(fields[0]);
    if (!date) throw ParseError(src, line_no, "malformed date '" + fields[0] + "'");
    std::int64_t count = 0;
    if (!parse_int64(fields[1], count)) {
      throw ParseError(src, line_no, "malformed count '" + fields[1] + "'");
    }
    if (count < 0) throw ParseError(src, line_no, "negative count");
    if (*date > release_date) {
      throw ParseError(src, line_no, "event date " + fields[0] + " after release date " +
                                         format_date(release_date));
    }
    if (auto it = seen.find(*date); it != seen.end()) {
      throw ParseError(src, line_no, "duplicate event_date " + fields[0] + " (first at line " +
                                         std::to_string(it->second) + ")");
    }
    seen.emplace(*date, line_no);
    snap.rows.push_back({*date, count});
    if (end == text.size()) break;
  }
  if (!header_seen) throw ParseError(src, line_no == 0 ? 1 : line_no, "missing header");
  std::sort(snap.rows.begin(), snap.rows.end(),
            [](const SnapshotRow& a, const SnapshotRow& b) { return a.event_date < b.event_date; });
  return snap;
}

ReleaseSnapshot load_release_file(const std::filesystem::path& path, Date release_date) {
  return parse_release(read_file(path), release_date, path.string());
}

std::vector<ReleaseSnapshot> load_manifest(const std::filesystem::path& path) {
  const auto text = read_file(path);
  const auto base = path.parent_path();
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::vector<ReleaseSnapshot> out;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = csv::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto fields = csv::split(view);
    if (!header_seen) {
      if (fields.size() != 2 || fields[0] != "release_date" || fields[1] != "path") {
        throw ParseError(path.string(), line_no, "expected header 'release_date,path'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 2) throw ParseError(path.string(), line_no, "expected 2 fields");
    const auto date = try_parse_date(fields[0]);
    if (!date) throw ParseError(path.string(), line_no, "malformed date '" + fields[0] + "'");
    std::filesystem::path file(fields[1]);
    if (file.is_relative()) file = base / file;
    out.push_back(load_release_file(file, *date));
  }
  if (!header_seen) throw ParseError(path.string(), 1, "missing header");
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.release_date < b.release_date;
  });
  return out;
}

ReportingTriangle build_triangle(std::span<const ReleaseSnapshot> snapshots,
                                 const TriangleOptions& options) {
  if (snapshots.size() < 2) throw DomainError("build_triangle needs at least 2 snapshots");
  if (options.max_delay < 1) throw DomainError("max_delay must be >= 1");
  if (options.bin_width < 1) throw DomainError("bin_width must be >= 1");
  for (std::size_t i = 1; i < snapshots.size(); ++i) {
    if (!(snapshots[i - 1].release_date < snapshots[i].release_date)) {
      throw DomainError("release dates must be strictly increasing (" +
                        format_date(snapshots[i - 1].release_date) + " then " +
                        format_date(snapshots[i].release_date) + ")");
    }
  }

  Date origin;
  if (options.origin) {
    origin = *options.origin;
  } else {
    bool any = false;
    for (const auto& s : snapshots) {
      for (const auto& row : s.rows) {
        if (!any || row.event_date < origin) origin = row.event_date;
        any = true;
      }
    }
    if (!any) throw DomainError("snapshots contain no event dates; pass an explicit origin");
  }

  const int width = options.bin_width;
  const long span_days = days_between(origin, options.now);
  if (span_days <= 0) throw DomainError("nowcast date must be after the origin");
  if (span_days % width != 0) {
    throw DomainError("nowcast date " + format_date(options.now) +
                      " is not a bin boundary (origin " + format_date(origin) + ", bin width " +
                      std::to_string(width) + ")");
  }
  const int T = static_cast<int>(span_days / width);
  const int D = options.max_delay;

  // Latest release per horizon h (number of complete bins at the release).
  std::map<int, const ReleaseSnapshot*> by_horizon;
  for (const auto& s : snapshots) {
    if (s.release_date > options.now) continue;
    const long h = floor_div(days_between(origin, s.release_date), width);
    if (h < 1) continue;
    by_horizon[static_cast<int>(h)] = &s;
  }

  std::vector<std::string> missing;
  for (int h = 1; h <= T; ++h) {
    if (!by_horizon.count(h)) missing.push_back(format_date(add_days(origin, long(h) * width)));
  }
  if (!missing.empty()) {
    std::string msg = "missing releases for bin boundaries:";
    for (const auto& m : missing) msg += " " + m;
    throw GapError(msg, std::move(missing));
  }

  // Cumulative count per complete bin for each horizon.
  std::map<int, std::vector<std::int64_t>> cumulative;
  for (const auto& [h, snap] : by_horizon) {
    if (h > T) continue;
    std::vector<std::int64_t> bins(static_cast<std::size_t>(T), 0);
    for (const auto& row : snap->rows) {
      const long offset = days_between(origin, row.event_date);
      if (offset < 0) continue;
      const long t = offset / width;
      if (t >= h || t >= T) continue;
      bins[static_cast<std::size_t>(t)] += row.cumulative_count;
    }
    cumulative.emplace(h, std::move(bins));
  }

  ReportingTriangle tri(T, D, width, origin, options.now);
  int clamped = 0;
  for (int t = 0; t < T; ++t) {
    for (int d = 0; d <= D && t + d <= T - 1; ++d) {
      const int h_now = d == D ? T : t + 1 + d;
      const std::int64_t current = cumulative.at(h_now)[static_cast<std::size_t>(t)];
      const std::int64_t previous = d == 0 ? 0 : cumulative.at(t + d)[static_cast<std::size_t>(t)];
      std::int64_t inc = current - previous;
      if (inc < 0) {
        inc = 0;
        ++clamped;
      }
      tri.set_count(t, d, inc);
    }
  }
  tri.set_negatives_clamped(clamped);
  return tri;
}

MarginalSeries marginal_totals(const ReportingTriangle& tri) {
  MarginalSeries out;
  out.provenance = Provenance::Raw;
  out.values.assign(static_cast<std::size_t>(tri.num_bins()), 0.0);
  for (int t = 0; t < tri.num_bins(); ++t) {
    double sum = 0;
    for (int d = 0; d < tri.num_delays(); ++d) {
      if (tri.observed(t, d)) sum += static_cast<double>(tri.count(t, d));
    }
    out.values[static_cast<std::size_t>(t)] = sum;
  }
  return out;
}

DelayDistribution delay_distribution(const ReportingTriangle& tri) {
  DelayDistribution out;
  out.fractions = Eigen::MatrixXd::Zero(tri.num_bins(), tri.num_delays());
  out.zero_row.assign(static_cast<std::size_t>(tri.num_bins()), false);
  for (int t = 0; t < tri.num_bins(); ++t) {
    double total = 0;
    for (int d = 0; d < tri.num_delays(); ++d) {
      if (tri.observed(t, d)) total += static_cast<double>(tri.count(t, d));
    }
    if (total <= 0) {
      out.zero_row[static_cast<std::size_t>(t)] = true;
      continue;
    }
    for (int d = 0; d < tri.num_delays(); ++d) {
      if (tri.observed(t, d)) out.fractions(t, d) = static_cast<double>(tri.count(t, d)) / total;
    }
  }
  return out;
}

std::vector<double> cumulative_delay_fraction(const ReportingTriangle& tri) {
  std::vector<double> per_delay(static_cast<std::size_t>(tri.num_delays()), 0.0);
  for (int t = 0; t < tri.num_bins(); ++t) {
    for (int d = 0; d < tri.num_delays(); ++d) {
      if (tri.observed(t, d)) per_delay[static_cast<std::size_t>(d)] += double(tri.count(t, d));
    }
  }
  const double total = std::accumulate(per_delay.begin(), per_delay.end(), 0.0);
  std::vector<double> out(per_delay.size(), 0.0);
  if (total <= 0) return out;
  double running = 0;
  for (std::size_t d = 0; d < per_delay.size(); ++d) {
    running += per_delay[d];
    out[d] = running / total;
  }
  out.back() = 1.0;
  return out;
}

std::vector<double> binned_totals(const ReleaseSnapshot& snapshot, Date origin, int bin_width,
                                  int num_bins) {
  std::vector<double> out(static_cast<std::size_t>(num_bins), 0.0);
  for (const auto& row : snapshot.rows) {
    const long offset = days_between(origin, row.event_date);
    if (offset < 0) continue;
    const long t = offset / bin_width;
    if (t >= num_bins) continue;
    out[static_cast<std::size_t>(t)] += static_cast<double>(row.cumulative_count);
  }
  return out;
}

std::vector<ReleaseSnapshot> snapshots_from_counts(std::span<const std::int64_t> counts,
                                                   int num_bins, int max_delay, int bin_width,
                                                   Date origin, int num_releases) {
  const int width = max_delay + 1;
  if (counts.size() != static_cast<std::size_t>(num_bins) * static_cast<std::size_t>(width)) {
    throw DomainError("snapshots_from_counts: count array has wrong size");
  }
  std::vector<ReleaseSnapshot> out;
  out.reserve(static_cast<std::size_t>(num_releases));
  for (int h = 1; h <= num_releases; ++h) {
    ReleaseSnapshot snap;
    snap.release_date = add_days(origin, static_cast<long>(h) * bin_width);
    for (int t = 0; t < std::min(h, num_bins); ++t) {
      const int max_d = std::min(h - 1 - t, max_delay);
      std::int64_t cum = 0;
      for (int d = 0; d <= max_d; ++d) cum += counts[static_cast<std::size_t>(t * width + d)];
      snap.rows.push_back({add_days(origin, static_cast<long>(t) * bin_width), cum});
    }
    out.push_back(std::move(snap));
  }
  return out;
}

void write_triangle(std::ostream& out, const ReportingTriangle& tri) {
  csv::write_metadata(out, {{"format", "nowcast-triangle/1"},
                            {"T", std::to_string(tri.num_bins())},
                            {"D", std::to_string(tri.max_delay())},
                            {"bin_width", std::to_string(tri.bin_width())},
                            {"origin", format_date(tri.origin())},
                            {"now", format_date(tri.now())},
                            {"negatives_clamped", std::to_string(tri.negatives_clamped())}});
  out << "t,d,count,observed\n";
  for (int t = 0; t < tri.num_bins(); ++t) {
    for (int d = 0; d < tri.num_delays(); ++d) {
      out << t << ',' << d << ',' << tri.count(t, d) << ',' << (tri.observed(t, d) ? 1 : 0)
          << '\n';
    }
  }
}

ReportingTriangle read_triangle(std::istream& in, std::string_view source) {
  const std::string src(source);
  std::string header;
  std::size_t line_no = 0;
  const auto meta = csv::read_metadata(in, header, line_no);
  auto need = [&](const char* key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw ParseError(src, line_no, std::string("missing metadata '") + key + "'");
    return it->second;
  };
  auto as_int = [&](const char* key) {
    std::int64_t v = 0;
    if (!parse_int64(need(key), v)) throw ParseError(src, line_no, std::string("bad integer for ") + key);
    return static_cast<int>(v);
  };
  auto as_date = [&](const char* key) {
    auto d = try_parse_date(need(key));
    if (!d) throw ParseError(src, line_no, std::string("bad date for ") + key);
    return *d;
  };
  if (header != "t,d,count,observed") throw ParseError(src, line_no, "expected header 't,d,count,observed'");
  const int T = as_int("T");
  const int D = as_int("D");
  ReportingTriangle tri(T, D, as_int("bin_width"), as_date("origin"), as_date("now"));
  tri.set_negatives_clamped(meta.count("negatives_clamped") ? as_int("negatives_clamped") : 0);
  std::vector<bool> seen(tri.num_cells(), false);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = csv::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto f = csv::split(view);
    std::int64_t t = 0, d = 0, c = 0, o = 0;
    if (f.size() != 4 || !parse_int64(f[0], t) || !parse_int64(f[1], d) || !parse_int64(f[2], c) ||
        !parse_int64(f[3], o)) {
      throw ParseError(src, line_no, "malformed row");
    }
    if (t < 0 || t >= T || d < 0 || d > D) throw ParseError(src, line_no, "cell out of range");
    if (c < 0) throw ParseError(src, line_no, "negative count");
    if (o != 0 && o != 1) throw ParseError(src, line_no, "observed must be 0 or 1");
    const auto idx = tri.cell(int(t), int(d));
    if (seen[idx]) throw ParseError(src, line_no, "duplicate cell");
    seen[idx] = true;
    tri.set_count(int(t), int(d), c);
    tri.set_observed(int(t), int(d), o == 1);
  }
  return tri;
}

ReportingTriangle load_triangle(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read_triangle(in, path.string());
}

void write_release(std::ostream& out, const ReleaseSnapshot& snapshot) {
  out << "event_date,count\n";
  for (const auto& row : snapshot.rows) {
    out << format_date(row.event_date) << ',' << row.cumulative_count << '\n';
  }
}

}  // namespace nowcast
