#include "geoshift/error.hpp"

namespace geoshift {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_parameter: return "invalid-parameter";
    case Errc::degenerate_point: return "degenerate-point";
    case Errc::unmappable_point: return "unmappable-point";
    case Errc::sign_degenerate: return "sign-degenerate";
    case Errc::shape: return "shape";
    case Errc::invalid_target: return "invalid-target";
    case Errc::configuration: return "configuration";
    case Errc::schema: return "schema";
    case Errc::dependency: return "dependency";
    case Errc::io: return "io";
  }
  return "unknown";
}

}  // namespace geoshift
