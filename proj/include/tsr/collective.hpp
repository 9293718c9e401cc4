// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tsr/linalg.hpp"

namespace tsr {

using Step = std::uint64_t;

/// What a synchronized tensor is.
enum class CommObjectKind {
  DenseGrad,       ///< full m x n gradient
  Core,            ///< r x r two-sided core
  SketchQ,         ///< m x k range basis on a refresh step
  SketchB,         ///< k x n reduced matrix on a refresh step
  NonMatrixDense,  ///< bias / norm parameters, always dense
  OneSidedFactor,  ///< r x n one-sided projection
};

std::string_view to_string(CommObjectKind kind);

struct CommRecord {
  Step step = 0;
  std::string layer;
  CommObjectKind kind = CommObjectKind::DenseGrad;
  std::uint64_t elements = 0;
  std::uint64_t bytes = 0;
};

struct StepBytes {
  Step step = 0;
  std::uint64_t bytes = 0;
  std::uint64_t cumulative = 0;
};

/// Append-only record of every synchronized object.
///
/// Each object is counted once per step at `dtype_bytes` per element
/// (payload volume, not per-link transport traffic). Appends must arrive in
/// non-decreasing step order.
class CommLedger {
public:
  explicit CommLedger(std::uint64_t dtype_bytes = 2);

  std::uint64_t dtype_bytes() const { return dtype_bytes_; }
  std::span<const CommRecord> records() const { return records_; }
  bool empty() const { return records_.empty(); }
  std::optional<Step> last_step() const;

  const CommRecord& append(Step step, std::string layer, CommObjectKind kind,
                           std::uint64_t elements);

private:
  std::uint64_t dtype_bytes_;
  std::vector<CommRecord> records_;
};

/// Sum of record bytes at step t. Zero for an empty ledger or a step with no
/// traffic; throws std::out_of_range past the last recorded step.
std::uint64_t bytes_per_step(const CommLedger& ledger, Step t);

/// Running sum of bytes_per_step over steps 0..t (the step-0 bucket holds the
/// initializing refresh).
std::uint64_t cumulative_bytes(const CommLedger& ledger, Step t);

/// Max of bytes_per_step over all recorded steps. Throws std::logic_error on an
/// empty ledger.
std::uint64_t peak_bytes(const CommLedger& ledger);

/// cumulative_bytes(T) / T. The numerator includes the step-0 bucket.
double average_bytes_per_step(const CommLedger& ledger, Step total_steps);

/// Per-step totals for steps 0..last_step.
std::vector<StepBytes> step_totals(const CommLedger& ledger);

/// step,layer,kind,elements,bytes
void write_ledger_csv(std::ostream& os, const CommLedger& ledger);
/// step,bytes_step,cumulative_bytes
void write_step_bytes_csv(std::ostream& os, const CommLedger& ledger);

/// Elementwise mean (1/N) sum_i X_i, summed in worker-index order, recorded in
/// the ledger as one object of rows*cols elements.
DenseMatrix all_reduce_mean(std::span<const DenseMatrix> inputs, CommLedger& ledger, Step step,
                            const std::string& layer, CommObjectKind kind);

}  // namespace tsr
