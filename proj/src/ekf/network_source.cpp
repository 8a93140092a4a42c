#include "gnio/ekf/network_source.hpp"

namespace gnio::ekf {

MeasurementFn network_measurements(net::GnioNet& net) {
  return [&net](const WindowRequest& w) -> std::optional<Measurement> {
    const auto pred = net::predict(net, *w.X);
    return Measurement{pred.d_hat, pred.covariance()};
  };
}

}  // namespace gnio::ekf
