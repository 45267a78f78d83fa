#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "nowcast/csv.hpp"
#include "nowcast/diagnostics.hpp"
#include "nowcast/nowcast.hpp"
#include "nowcast/sampler.hpp"
#include "nowcast/triangle.hpp"

namespace nowcast {

// Long-format posterior draws `chain,iter,param,value` on the constrained
// scale. Latent blocks are written only when `include_latent` is set; their
// block names go in the `latent` metadata entry either way.
void write_draws(std::ostream& out, const PosteriorDraws& draws, const csv::Metadata& meta,
                 bool include_latent = false);

struct DrawsTable {
  std::vector<std::string> names;
  std::vector<bool> latent;
  std::vector<ChainSeries> series;  // per parameter, per chain
  std::map<std::string, std::string> metadata;
};

DrawsTable read_draws(std::istream& in, std::string_view source = "<draws>");

// Diagnostics computed from a draws file.
DiagnosticsTable summarize(const DrawsTable& table, const SummaryOptions& opts = {});

void write_nowcast(std::ostream& out, const NowcastSummary& summary, const csv::Metadata& meta);
// `day,date,quantity,value`, one row per day and statistic.
void write_daily(std::ostream& out, const DailySeries& daily, Date origin, const csv::Metadata& meta);

}  // namespace nowcast
