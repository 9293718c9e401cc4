// SPDX-License-Identifier: Apache-2.0
#include "tsr/collective.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

namespace tsr {

std::string_view to_string(CommObjectKind kind) {
  switch (kind) {
    case CommObjectKind::DenseGrad:
      return "DenseGrad";
    case CommObjectKind::Core:
      return "Core";
    case CommObjectKind::SketchQ:
      return "SketchQ";
    case CommObjectKind::SketchB:
      return "SketchB";
    case CommObjectKind::NonMatrixDense:
      return "NonMatrixDense";
    case CommObjectKind::OneSidedFactor:
      return "OneSidedFactor";
  }
  return "Unknown";
}

CommLedger::CommLedger(std::uint64_t dtype_bytes) : dtype_bytes_(dtype_bytes) {
  require(dtype_bytes >= 1, "CommLedger: dtype_bytes must be positive");
}

std::optional<Step> CommLedger::last_step() const {
  if (records_.empty()) {
    return std::nullopt;
  }
  return records_.back().step;
}

const CommRecord& CommLedger::append(Step step, std::string layer, CommObjectKind kind,
                                     std::uint64_t elements) {
  require(records_.empty() || step >= records_.back().step,
          "CommLedger: records must be appended in step order");
  records_.push_back(CommRecord{step, std::move(layer), kind, elements, elements * dtype_bytes_});
  return records_.back();
}

namespace {

void require_in_range(const CommLedger& ledger, Step t) {
  if (const auto last = ledger.last_step(); last && t > *last) {
    throw std::out_of_range("ledger: step " + std::to_string(t) + " beyond last recorded step " +
                            std::to_string(*last));
  }
}

}  // namespace

std::uint64_t bytes_per_step(const CommLedger& ledger, Step t) {
  require_in_range(ledger, t);
  std::uint64_t total = 0;
  for (const auto& rec : ledger.records()) {
    if (rec.step == t) {
      total += rec.bytes;
    }
  }
  return total;
}

std::uint64_t cumulative_bytes(const CommLedger& ledger, Step t) {
  require_in_range(ledger, t);
  std::uint64_t total = 0;
  for (const auto& rec : ledger.records()) {
    if (rec.step <= t) {
      total += rec.bytes;
    }
  }
  return total;
}

std::vector<StepBytes> step_totals(const CommLedger& ledger) {
  std::vector<StepBytes> out;
  const auto last = ledger.last_step();
  if (!last) {
    return out;
  }
  out.resize(static_cast<std::size_t>(*last) + 1);
  for (std::size_t s = 0; s < out.size(); ++s) {
    out[s].step = s;
  }
  for (const auto& rec : ledger.records()) {
    out[static_cast<std::size_t>(rec.step)].bytes += rec.bytes;
  }
  std::uint64_t running = 0;
  for (auto& entry : out) {
    running += entry.bytes;
    entry.cumulative = running;
  }
  return out;
}

std::uint64_t peak_bytes(const CommLedger& ledger) {
  if (ledger.empty()) {
    throw std::logic_error("peak_bytes: empty ledger");
  }
  std::uint64_t peak = 0;
  for (const auto& entry : step_totals(ledger)) {
    peak = std::max(peak, entry.bytes);
  }
  return peak;
}

double average_bytes_per_step(const CommLedger& ledger, Step total_steps) {
  require(total_steps >= 1, "average_bytes_per_step: T must be >= 1");
  if (ledger.empty()) {
    return 0.0;
  }
  return static_cast<double>(cumulative_bytes(ledger, total_steps)) /
         static_cast<double>(total_steps);
}

void write_ledger_csv(std::ostream& os, const CommLedger& ledger) {
  os << "step,layer,kind,elements,bytes\n";
  for (const auto& rec : ledger.records()) {
    os << rec.step << ',' << rec.layer << ',' << to_string(rec.kind) << ',' << rec.elements << ','
       << rec.bytes << '\n';
  }
}

void write_step_bytes_csv(std::ostream& os, const CommLedger& ledger) {
  os << "step,bytes_step,cumulative_bytes\n";
  for (const auto& entry : step_totals(ledger)) {
    os << entry.step << ',' << entry.bytes << ',' << entry.cumulative << '\n';
  }
}

DenseMatrix all_reduce_mean(std::span<const DenseMatrix> inputs, CommLedger& ledger, Step step,
                            const std::string& layer, CommObjectKind kind) {
  require(!inputs.empty(), "all_reduce_mean: no worker inputs");
  const Index rows = inputs.front().rows();
  const Index cols = inputs.front().cols();
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    require(inputs[i].rows() == rows && inputs[i].cols() == cols,
            "all_reduce_mean: worker " + std::to_string(i) + " has shape " +
                std::to_string(inputs[i].rows()) + "x" + std::to_string(inputs[i].cols()) +
                ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  DenseMatrix sum = inputs.front();
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    sum += inputs[i];
  }
  if (inputs.size() > 1) {
    sum /= static_cast<double>(inputs.size());
  }
  ledger.append(step, layer, kind, static_cast<std::uint64_t>(rows * cols));
  return sum;
}

}  // namespace tsr
