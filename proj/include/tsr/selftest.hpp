// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace tsr {

/// Quick invariant sweep behind `tsr-sim selftest`: orthonormalization, SVD
/// reconstruction, core linearity under all-reduce, identity-basis
/// equivalence with dense AdamW, rank-r recovery, and ledger/predictor
/// agreement. Prints one line per check; returns true when all pass.
bool run_selftest(std::ostream& os);

}  // namespace tsr
