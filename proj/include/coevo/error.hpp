#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace coevo {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// grammar
class GrammarSyntaxError : public Error {
 public:
  GrammarSyntaxError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UndefinedNonterminal : public Error {
 public:
  explicit UndefinedNonterminal(std::string name)
      : Error("undefined nonterminal <" + name + ">"), name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class DuplicateRule : public Error {
 public:
  DuplicateRule(std::size_t line, const std::string& name)
      : Error("line " + std::to_string(line) + ": duplicate rule for <" + name + ">"),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// engine
class StructureMismatch : public Error { using Error::Error; };
class MissingOutcomes : public Error { using Error::Error; };
class DimensionMismatch : public Error { using Error::Error; };
class InvalidConfig : public Error { using Error::Error; };

// environments
class InterpretError : public Error { using Error::Error; };
class ScenarioError : public Error { using Error::Error; };

// establo
class CorruptRecord : public Error { using Error::Error; };
class GrammarMismatch : public Error { using Error::Error; };
class EmptyInput : public Error { using Error::Error; };

// cli
class ConfigError : public Error { using Error::Error; };
class EmptyStore : public Error { using Error::Error; };
class UnknownRun : public Error { using Error::Error; };

}  // namespace coevo
