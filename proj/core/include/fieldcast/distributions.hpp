#pragma once

namespace fieldcast {

double gaussian_cdf(double z);
double gaussian_pdf(double z);

// Standard normal quantile; throws std::domain_error unless 0 < p < 1.
double gaussian_quantile(double p);

}  // namespace fieldcast
