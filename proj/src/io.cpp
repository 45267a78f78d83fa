#include "nowcast/io.hpp"

#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "nowcast/error.hpp"

namespace nowcast {

void write_draws(std::ostream& out, const PosteriorDraws& draws, const csv::Metadata& meta, bool include_latent) {
  const auto& layout = draws.layout();
  std::string latent_blocks;
  for (const auto& b : layout.blocks()) {
    if (!b.latent) continue;
    if (!latent_blocks.empty()) latent_blocks += ';';
    latent_blocks += b.name;
  }
  csv::Metadata m = meta;
  m.emplace_back("format", "nowcast-draws/1");
  m.emplace_back("chains", std::to_string(draws.num_chains()));
  m.emplace_back("draws_per_chain", std::to_string(draws.draws_per_chain()));
  m.emplace_back("latent", latent_blocks);
  csv::write_metadata(out, m);
  out << "chain,iter,param,value\n";
  const auto names = layout.constrained_names();
  const auto latent = layout.constrained_latent_mask();
  for (int c = 0; c < draws.num_chains(); ++c) {
    for (int i = 0; i < draws.draws_per_chain(); ++i) {
      const auto x = draws.constrained(c, i);
      for (std::size_t p = 0; p < names.size(); ++p) {
        if (latent[p] && !include_latent) continue;
        out << c << ',' << i << ',' << names[p] << ',' << csv::format_double(x[p]) << '\n';
      }
    }
  }
}

DrawsTable read_draws(std::istream& in, std::string_view source) {
  DrawsTable table;
  std::string header;
  std::size_t line_no = 0;
  table.metadata = csv::read_metadata(in, header, line_no);
  const std::string src(source);
  if (csv::trim(header) != "chain,iter,param,value") {
    throw ParseError(src, line_no, "expected header chain,iter,param,value");
  }
  std::set<std::string> latent_blocks;
  if (auto it = table.metadata.find("latent"); it != table.metadata.end()) {
    for (const auto& b : csv::split(it->second, ';')) {
      if (!csv::trim(b).empty()) latent_blocks.insert(std::string(csv::trim(b)));
    }
  }
  std::map<std::string, std::size_t> index;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line, ',');
    if (f.size() != 4) throw ParseError(src, line_no, "expected 4 fields");
    long chain = 0, iter = 0;
    double value = 0.0;
    try {
      std::size_t pos = 0;
      chain = std::stol(f[0], &pos);
      if (pos != f[0].size()) throw std::invalid_argument("chain");
      iter = std::stol(f[1], &pos);
      if (pos != f[1].size()) throw std::invalid_argument("iter");
      value = std::stod(f[3], &pos);
      if (pos != f[3].size()) throw std::invalid_argument("value");
    } catch (const std::exception&) {
      throw ParseError(src, line_no, "bad number");
    }
    if (chain < 0 || iter < 0) throw ParseError(src, line_no, "negative chain or iteration");
    const std::string& name = f[2];
    auto [it, fresh] = index.try_emplace(name, table.names.size());
    if (fresh) {
      table.names.push_back(name);
      table.latent.push_back(latent_blocks.count(name.substr(0, name.find('['))) > 0);
      table.series.emplace_back();
    }
    auto& s = table.series[it->second];
    if (s.size() <= std::size_t(chain)) s.resize(std::size_t(chain) + 1);
    auto& c = s[std::size_t(chain)];
    if (std::size_t(iter) != c.size()) throw ParseError(src, line_no, "iterations out of order for " + name);
    c.push_back(value);
  }
  if (table.names.empty()) throw ParseError(src, line_no, "no draws");
  for (std::size_t p = 0; p < table.names.size(); ++p) {
    const auto& s = table.series[p];
    for (const auto& c : s) {
      if (c.size() != s.front().size() || c.empty()) {
        throw ParseError(src, line_no, "ragged chains for " + table.names[p]);
      }
    }
  }
  return table;
}

DiagnosticsTable summarize(const DrawsTable& table, const SummaryOptions& opts) {
  DiagnosticsTable out;
  for (std::size_t p = 0; p < table.names.size(); ++p) {
    if (table.latent[p] && !opts.include_latent) continue;
    auto row = summarize(table.names[p], table.series[p]);
    row.latent = table.latent[p];
    out.rows.push_back(std::move(row));
  }
  return out;
}

void write_nowcast(std::ostream& out, const NowcastSummary& s, const csv::Metadata& meta) {
  csv::Metadata m = meta;
  m.emplace_back("format", "nowcast-totals/1");
  csv::write_metadata(out, m);
  out << "t,mean,q2.5,q25,q50,q75,q97.5,observed_partial\n";
  for (std::size_t t = 0; t < s.size(); ++t) {
    out << t << ',' << csv::format_double(s.mean[t]) << ',' << csv::format_double(s.q025[t]) << ','
        << csv::format_double(s.q25[t]) << ',' << csv::format_double(s.q50[t]) << ','
        << csv::format_double(s.q75[t]) << ',' << csv::format_double(s.q975[t]) << ','
        << csv::format_double(s.observed_partial[t]) << '\n';
  }
}

void write_daily(std::ostream& out, const DailySeries& d, Date origin, const csv::Metadata& meta) {
  csv::Metadata m = meta;
  m.emplace_back("format", "nowcast-daily/1");
  m.emplace_back("clipped", std::to_string(d.clipped));
  csv::write_metadata(out, m);
  out << "day,date,quantity,value\n";
  const std::pair<const char*, const std::vector<double>*> cols[] = {
      {"mean", &d.mean}, {"q2.5", &d.q025}, {"q25", &d.q25},
      {"q50", &d.q50},   {"q75", &d.q75},   {"q97.5", &d.q975}};
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::string date = format_date(add_days(origin, static_cast<long>(i)));
    for (const auto& [name, v] : cols) {
      out << i << ',' << date << ',' << name << ',' << csv::format_double((*v)[i]) << '\n';
    }
  }
}

}  // namespace nowcast
