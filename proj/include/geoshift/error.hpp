#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geoshift {

enum class Errc {
  invalid_parameter,
  degenerate_point,
  unmappable_point,
  sign_degenerate,
  shape,
  invalid_target,
  configuration,
  schema,
  dependency,
  io,
};

std::string_view to_string(Errc code);

// Every library failure surfaces as this exception; code() tells callers which
// contract was broken without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace geoshift
