#pragma once

#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "nowcast/sampler.hpp"

namespace nowcast {

// Draws of one scalar, one vector per chain (equal lengths).
using ChainSeries = std::vector<std::vector<double>>;

// A diagnostic value; `degenerate` marks inputs without within-chain
// variation, for which `value` is a sentinel (+inf for R-hat, the draw count
// for ESS).
struct DiagValue {
  double value = 0.0;
  bool degenerate = false;
};

// Rank-normalised split R-hat: sqrt((N-1)/N + B/(N W)) over split chains.
DiagValue split_rhat(const ChainSeries& chains);
DiagValue ess_bulk(const ChainSeries& chains);
// Minimum ESS of the indicators x <= q05 and x <= q95.
DiagValue ess_tail(const ChainSeries& chains);

// Pieces of the above, exposed for tests.
ChainSeries split_chains(const ChainSeries& chains);
ChainSeries rank_normalize(const ChainSeries& chains);
DiagValue ess_raw(const ChainSeries& chains);
double rhat_raw(const ChainSeries& chains);

struct ParamSummary {
  std::string name;
  bool latent = false;
  double mean = 0.0;
  double sd = 0.0;
  double q03 = 0.0;
  double q97 = 0.0;
  DiagValue ess_bulk;
  DiagValue ess_tail;
  DiagValue r_hat;
};

struct DiagnosticsTable {
  std::vector<ParamSummary> rows;
  std::vector<int> divergences;  // per chain

  // Largest R-hat over non-latent parameters; degenerate rows count as +inf.
  double max_rhat() const;
  bool passes_gate(double threshold = 1.01) const;
  std::vector<std::string> failing(double threshold = 1.01) const;
};

struct SummaryOptions {
  bool include_latent = true;
};

ParamSummary summarize(const std::string& name, const ChainSeries& chains);
DiagnosticsTable summarize(const PosteriorDraws& draws, const SummaryOptions& opts = {});

// Table columns: param,mean,sd,hdi_3%,hdi_97%,ess_bulk,ess_tail,r_hat.
void write_diagnostics(std::ostream& out, const DiagnosticsTable& table);

}  // namespace nowcast
