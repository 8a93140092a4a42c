#pragma once

#include "gnio/ekf/filter.hpp"
#include "gnio/net/gnio_net.hpp"

namespace gnio::ekf {

/// Eval-mode network prediction on the filter-aligned window:
/// d_hat and diag(exp(2u)).
MeasurementFn network_measurements(net::GnioNet& net);

}  // namespace gnio::ekf
