/* Copyright 2026 The aqtune Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "aq/hwtune.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "aq/error.hpp"
#include "aq/kernels.hpp"

namespace aq::hw {

namespace {

std::uint64_t layer_bytes(std::uint64_t elements, int bits) {
  return (elements * static_cast<std::uint64_t>(bits) + 7) / 8;
}

std::string opt_number(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

ResourceReport resources(const LayerResourceSpec& spec, const QuantConfig& config) {
  config.validate(spec.size());
  ResourceReport r;
  for (std::size_t l = 0; l < spec.size(); ++l) {
    r.param_bytes += layer_bytes(spec.weights[l], config.bits[l]);
    const auto act = layer_bytes(spec.activations[l], config.bits[l]);
    r.act_bytes_sum += act;
    r.act_bytes_peak = std::max(r.act_bytes_peak, act);
  }
  return r;
}

std::uint64_t field(const ResourceReport& report, ResourceKey key) {
  switch (key) {
    case ResourceKey::kParamBytes: return report.param_bytes;
    case ResourceKey::kActBytesSum: return report.act_bytes_sum;
    case ResourceKey::kActBytesPeak: return report.act_bytes_peak;
  }
  return report.param_bytes;
}

ResourceKey resource_key_from_string(const std::string& name) {
  if (name == "param_bytes") return ResourceKey::kParamBytes;
  if (name == "act_bytes_sum") return ResourceKey::kActBytesSum;
  if (name == "act_bytes_peak") return ResourceKey::kActBytesPeak;
  fail(ErrorKind::kInput, "unknown resource key '" + name + "' (param_bytes|act_bytes_sum|act_bytes_peak)");
}

std::string to_string(ResourceKey key) {
  switch (key) {
    case ResourceKey::kParamBytes: return "param_bytes";
    case ResourceKey::kActBytesSum: return "act_bytes_sum";
    case ResourceKey::kActBytesPeak: return "act_bytes_peak";
  }
  return "param_bytes";
}

void Budget::validate() const {
  for (const auto& cap : {param_bytes, act_bytes_sum, act_bytes_peak})
    if (cap && *cap == 0) fail(ErrorKind::kInput, "budget caps must be positive");
}

bool Budget::admits(const ResourceReport& r) const {
  return (!param_bytes || r.param_bytes <= *param_bytes) && (!act_bytes_sum || r.act_bytes_sum <= *act_bytes_sum) &&
         (!act_bytes_peak || r.act_bytes_peak <= *act_bytes_peak);
}

std::vector<RankedProposal> rank(std::span<const Proposal> proposals, const LayerResourceSpec& spec,
                                 ResourceKey key) {
  std::vector<RankedProposal> out;
  out.reserve(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i)
    out.push_back({proposals[i], resources(spec, proposals[i].config), i});
  std::stable_sort(out.begin(), out.end(), [key](const RankedProposal& a, const RankedProposal& b) {
    const auto fa = field(a.report, key);
    const auto fb = field(b.report, key);
    if (fa != fb) return fa < fb;
    return a.proposal.predicted_label > b.proposal.predicted_label;
  });
  return out;
}

std::optional<RankedProposal> select(std::span<const Proposal> proposals, const LayerResourceSpec& spec,
                                     const Budget& budget) {
  budget.validate();
  std::optional<RankedProposal> best;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const auto report = resources(spec, proposals[i].config);
    if (!budget.admits(report)) continue;
    const double label = proposals[i].predicted_label;
    if (!best || label > best->proposal.predicted_label ||
        (label == best->proposal.predicted_label && report.param_bytes < best->report.param_bytes))
      best = RankedProposal{proposals[i], report, i};
  }
  return best;
}

std::size_t feasible_count(std::span<const Proposal> proposals, const LayerResourceSpec& spec,
                           const Budget& budget) {
  budget.validate();
  return static_cast<std::size_t>(std::count_if(proposals.begin(), proposals.end(), [&](const Proposal& p) {
    return budget.admits(resources(spec, p.config));
  }));
}

BaselineResult uniform_baseline(const Environment& env, int bits) {
  BaselineResult r;
  r.point.config = QuantConfig::uniform(env.layer_count(), bits);
  r.point.accuracy = env.evaluate(r.point.config);
  r.report = resources(env.resources(), r.point.config);
  return r;
}

std::vector<CompareRow> compare_report(const TrainedModel& model, const Environment& env,
                                       std::span<const int> uniform_bits, const CompareOptions& options) {
  require_same_environment(model.environment, env.descriptor());
  std::vector<double> conditions = options.conditions;
  if (conditions.empty()) {
    constexpr int kGrid = 21;
    for (int i = 0; i < kGrid; ++i)
      conditions.push_back(denormalize(static_cast<double>(i) / (kGrid - 1), model.labels));
  }

  // One proposal pool shared by every budget.
  struct Candidate {
    Proposal proposal;
    double target;
    ResourceReport report;
  };
  std::vector<Candidate> pool;
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    auto gen = generate(model, conditions[c], options.count, derive_seed(options.seed, c));
    for (auto& p : gen.proposals) {
      const auto rep = resources(env.resources(), p.config);
      pool.push_back({std::move(p), conditions[c], rep});
    }
  }

  std::vector<CompareRow> rows;
  for (int bits : uniform_bits) {
    const auto base = uniform_baseline(env, bits);
    rows.push_back({"one-step-q", std::to_string(bits), base.point.accuracy, base.report});

    std::vector<QuantConfig> feasible;
    std::vector<const Candidate*> owners;
    for (const auto& cand : pool)
      if (cand.report.param_bytes <= base.report.param_bytes) {
        feasible.push_back(cand.proposal.config);
        owners.push_back(&cand);
      }
    CompareRow row{"aqgan", "", std::nullopt, std::nullopt};
    if (!feasible.empty()) {
      const auto acc = kernels::evaluate_many(env, feasible);
      std::size_t best = 0;
      for (std::size_t i = 1; i < acc.size(); ++i)
        if (acc[i] > acc[best] || (acc[i] == acc[best] && owners[i]->report.param_bytes < owners[best]->report.param_bytes))
          best = i;
      row.bits_or_target = format_double(owners[best]->target);
      row.accuracy = acc[best];
      row.report = owners[best]->report;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string compare_csv(std::span<const CompareRow> rows) {
  std::string out = "method,bits_or_target,accuracy,param_bytes,act_bytes_sum,act_bytes_peak\n";
  for (const auto& r : rows) {
    out += r.method + "," + r.bits_or_target + "," + opt_number(r.accuracy) + ",";
    if (r.report)
      out += std::to_string(r.report->param_bytes) + "," + std::to_string(r.report->act_bytes_sum) + "," +
             std::to_string(r.report->act_bytes_peak);
    else
      out += ",,";
    out += "\n";
  }
  return out;
}

std::string proposals_csv(std::span<const RankedProposal> ranked, const LabelMeta& labels) {
  std::string out = "rank,config,predicted_label,predicted_accuracy,param_bytes,act_bytes_sum,act_bytes_peak\n";
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& r = ranked[i];
    std::string cfg;
    for (std::size_t l = 0; l < r.proposal.config.bits.size(); ++l) {
      if (l) cfg += ' ';
      cfg += std::to_string(r.proposal.config.bits[l]);
    }
    out += std::to_string(i) + "," + cfg + "," + format_double(r.proposal.predicted_label) + "," +
           format_double(denormalize(r.proposal.predicted_label, labels)) + "," +
           std::to_string(r.report.param_bytes) + "," + std::to_string(r.report.act_bytes_sum) + "," +
           std::to_string(r.report.act_bytes_peak) + "\n";
  }
  return out;
}

Histogram histogram(std::span<const double> values, std::size_t bins) {
  if (bins < 1) fail(ErrorKind::kInput, "histogram needs at least one bin");
  Histogram h;
  h.counts.assign(bins, 0);
  if (values.empty()) {
    for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(static_cast<double>(i));
    return h;
  }
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (hi <= lo) hi = lo + 1.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(lo + width * static_cast<double>(i));
  h.edges.back() = hi;
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / width);
    h.counts[std::min(b, bins - 1)] += 1;
  }
  return h;
}

std::string histogram_csv(const Histogram& h, const std::string& metric) {
  std::string out = "metric,bin_lo,bin_hi,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    out += metric + "," + format_double(h.edges[i]) + "," + format_double(h.edges[i + 1]) + "," +
           std::to_string(h.counts[i]) + "\n";
  return out;
}

std::string histogram_svg(const Histogram& h, const std::string& title) {
  constexpr double kWidth = 480.0;
  constexpr double kHeight = 240.0;
  constexpr double kPad = 30.0;
  const std::size_t peak = h.counts.empty() ? 1 : std::max<std::size_t>(1, *std::max_element(h.counts.begin(), h.counts.end()));
  const double bar = (kWidth - 2 * kPad) / static_cast<double>(std::max<std::size_t>(1, h.counts.size()));
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
  svg << "<text x=\"" << kPad << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"12\">" << title << "</text>\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double height = (kHeight - 2 * kPad) * static_cast<double>(h.counts[i]) / static_cast<double>(peak);
    svg << "<rect x=\"" << kPad + bar * static_cast<double>(i) << "\" y=\"" << kHeight - kPad - height
        << "\" width=\"" << std::max(1.0, bar - 1.0) << "\" height=\"" << height << "\" fill=\"steelblue\"/>\n";
  }
  svg << "<text x=\"" << kPad << "\" y=\"" << kHeight - 8 << "\" font-family=\"sans-serif\" font-size=\"10\">"
      << format_double(h.edges.front()) << "</text>\n";
  svg << "<text x=\"" << kWidth - kPad - 80 << "\" y=\"" << kHeight - 8
      << "\" font-family=\"sans-serif\" font-size=\"10\">" << format_double(h.edges.back()) << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace aq::hw
