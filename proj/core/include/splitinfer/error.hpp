// Copyright 2026 The splitinfer Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace splitinfer {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file. `line` is 0 when the format has no line structure.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Shape chain or declared-dimension mismatch; `layer` names the offending layer.
class StructuralError : public Error {
public:
    StructuralError(std::size_t layer, const std::string& what)
        : Error("layer " + std::to_string(layer) + ": " + what), layer_(layer) {}
    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

class UnsupportedOperatorError : public Error {
public:
    using Error::Error;
};

class BoundsError : public Error {
public:
    using Error::Error;
};

class FusionError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class AllocationError : public Error {
public:
    using Error::Error;
};

class InfeasibleCapacityError : public Error {
public:
    InfeasibleCapacityError(double capacity_kb, double model_kb)
        : Error("infeasible capacity: storage limits sum to " + std::to_string(capacity_kb) +
                " KB but model needs " + std::to_string(model_kb) + " KB"),
          capacity_kb_(capacity_kb), model_kb_(model_kb) {}
    double capacity_kb() const noexcept { return capacity_kb_; }
    double model_kb() const noexcept { return model_kb_; }

private:
    double capacity_kb_;
    double model_kb_;
};

class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// A worker was asked to compute without the activations it needs.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Raised when a simulated worker's RAM gauge crosses its budget. Simulation halts.
class OutOfMemoryFault : public Error {
public:
    OutOfMemoryFault(std::size_t worker, std::size_t layer, std::size_t bytes, std::size_t limit)
        : Error("out of memory on worker " + std::to_string(worker) + " at layer " +
                std::to_string(layer) + ": " + std::to_string(bytes) + " B > " +
                std::to_string(limit) + " B"),
          worker_(worker), layer_(layer), bytes_(bytes), limit_(limit) {}
    std::size_t worker() const noexcept { return worker_; }
    std::size_t layer() const noexcept { return layer_; }
    std::size_t bytes() const noexcept { return bytes_; }
    std::size_t limit() const noexcept { return limit_; }

private:
    std::size_t worker_;
    std::size_t layer_;
    std::size_t bytes_;
    std::size_t limit_;
};

/// A worker's fragments do not fit its flash.
class DeploymentFault : public Error {
public:
    DeploymentFault(std::size_t worker, std::size_t bytes, std::size_t limit)
        : Error("deployment fault on worker " + std::to_string(worker) + ": fragments need " +
                std::to_string(bytes) + " B, flash holds " + std::to_string(limit) + " B"),
          worker_(worker) {}
    std::size_t worker() const noexcept { return worker_; }

private:
    std::size_t worker_;
};

}  // namespace splitinfer
