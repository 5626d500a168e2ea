#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace scanvar {

// Root of every exception thrown by the library.
class error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class dimension_error : public error {
public:
  using error::error;
};

class index_error : public error {
public:
  using error::error;
};

// A kernel, distribution or family violates a structural invariant.
class validation_error : public error {
public:
  using error::error;
};

class singular_system_error : public error {
public:
  using error::error;
};

class summability_error : public error {
public:
  using error::error;
};

class reducibility_error : public error {
public:
  using error::error;
};

class degenerate_conditional_error : public error {
public:
  using error::error;
};

// A mathematical precondition (self-adjointness, dominance, k == 2, ...) is not met.
class precondition_error : public error {
public:
  using error::error;
};

class table_size_error : public error {
public:
  using error::error;
};

class config_error : public error {
public:
  using error::error;
};

// Model file could not be parsed; line/column are 1-based, 0 when unknown.
class parse_error : public error {
public:
  parse_error(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : error(what), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

private:
  std::size_t line_;
  std::size_t column_;
};

} // namespace scanvar
