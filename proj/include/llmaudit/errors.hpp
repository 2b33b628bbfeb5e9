#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

namespace llmaudit {

/// Contract violation or unusable input (bad file, unknown column, refused budget).
class AuditError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Minimal value-or-error carrier for per-item outcomes that must not throw
/// (batch predictions, response parsing). Replace with std::expected once the
/// toolchain baseline moves to C++23.
template <typename T, typename E>
class Expected {
public:
  Expected(T value) : storage_(std::in_place_index<0>, std::move(value)) {}
  Expected(E error) : storage_(std::in_place_index<1>, std::move(error)) {}

  [[nodiscard]] bool has_value() const noexcept { return storage_.index() == 0; }
  explicit operator bool() const noexcept { return has_value(); }

  T& value() & {
    if (!has_value()) throw AuditError("Expected: no value present");
    return std::get<0>(storage_);
  }
  const T& value() const& {
    if (!has_value()) throw AuditError("Expected: no value present");
    return std::get<0>(storage_);
  }
  T&& value() && {
    if (!has_value()) throw AuditError("Expected: no value present");
    return std::get<0>(std::move(storage_));
  }
  const E& error() const& { return std::get<1>(storage_); }

  const T& operator*() const& { return value(); }
  const T* operator->() const { return &value(); }

private:
  std::variant<T, E> storage_;
};

}  // namespace llmaudit
