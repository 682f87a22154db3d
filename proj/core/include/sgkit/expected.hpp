#pragma once

// Minimal result type used where a failure is an ordinary outcome rather
// than an exceptional one (parsing, remote calls). Close in spirit to
// std::expected, which is not available in C++20.

#include <stdexcept>
#include <utility>
#include <variant>

namespace sgkit {

template <typename T, typename E>
class Expected {
 public:
  Expected(T value) : state_(std::in_place_index<0>, std::move(value)) {}
  Expected(E error) : state_(std::in_place_index<1>, std::move(error)) {}

  bool ok() const { return state_.index() == 0; }
  explicit operator bool() const { return ok(); }

  T& value() {
    require(ok());
    return std::get<0>(state_);
  }
  const T& value() const {
    require(ok());
    return std::get<0>(state_);
  }
  E& error() {
    require(!ok());
    return std::get<1>(state_);
  }
  const E& error() const {
    require(!ok());
    return std::get<1>(state_);
  }

  T& operator*() { return value(); }
  const T& operator*() const { return value(); }
  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }

 private:
  static void require(bool cond) {
    if (!cond) throw std::logic_error("Expected: accessed wrong alternative");
  }
  std::variant<T, E> state_;
};

}  // namespace sgkit
