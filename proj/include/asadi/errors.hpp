#pragma once

#include <stdexcept>
#include <string>

namespace asadi {

// Raised when a runtime check contradicts one of the framework's standing
// assumptions, e.g. the (A4)(b) chain structure or the (A1)(a) boundedness box.
// The assumption tag is kept separate so audits and tests can match on it.
class AssumptionError : public std::runtime_error {
 public:
  AssumptionError(std::string assumption, const std::string& detail)
      : std::runtime_error("assumption " + assumption + " violated: " + detail),
        assumption_(std::move(assumption)) {}

  const std::string& assumption() const { return assumption_; }

 private:
  std::string assumption_;
};

}  // namespace asadi
