#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace optoent::detail {

/// In-place DFT. sign = +1 computes sum_n x_n e^{+2 pi i k n / N},
/// sign = -1 the conjugate kernel. Unnormalized.
void dft_inplace(std::vector<std::complex<double>>& data, int sign);

/// Smallest size >= n whose prime factors are 2, 3, 5 or 7.
std::size_t fast_size(std::size_t n);

}  // namespace optoent::detail
