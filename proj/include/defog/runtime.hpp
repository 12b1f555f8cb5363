#pragma once

#include <functional>
#include <string>

#include "defog/engine.hpp"

namespace defog {

// Backend seen by one rank's application thread: a progress context running
// the rank's Engine, a clock and a way to block until a completion is done.
class Runtime {
 public:
  virtual ~Runtime() = default;

  virtual int rank() const = 0;
  virtual int size() const = 0;
  virtual int local_size() const = 0;
  virtual const char* backend() const = 0;

  // Runs `task` on the progress context. Called from the application thread.
  virtual void post(std::function<void(Engine&)> task) = 0;
  // Blocks the application thread until `c` is done.
  virtual void wait(const Completion& c) = 0;

  virtual double now() const = 0;
  // Local computation of the given duration (virtual on the simulator).
  virtual void compute(double seconds) = 0;
  // Collective shutdown; idempotent.
  virtual void finalize() {}
  // Immediate teardown without synchronizing with peers; idempotent.
  virtual void abort() {}
};

}  // namespace defog
