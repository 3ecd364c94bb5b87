#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace vilbench {

// Base of every error raised by the harness modules.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedMap : public Error {
 public:
  using Error::Error;
};

class DegenerateMap : public Error {
 public:
  using Error::Error;
};

class ParticipantMissing : public Error {
 public:
  using Error::Error;
};

class DuplicateActor : public Error {
 public:
  using Error::Error;
};

class InvalidPose : public Error {
 public:
  using Error::Error;
};

class PayloadTooLong : public Error {
 public:
  using Error::Error;
};

class MalformedFrame : public Error {
 public:
  using Error::Error;
};

class IllegalTransition : public Error {
 public:
  using Error::Error;
};

class OffTrack : public Error {
 public:
  using Error::Error;
};

class NoTriggers : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class PeerUnreachable : public Error {
 public:
  using Error::Error;
};

class ProtocolViolation : public Error {
 public:
  using Error::Error;
};

class ScenarioDiverged : public Error {
 public:
  ScenarioDiverged(const std::string& what, std::int64_t tick) : Error(what), tick_(tick) {}
  std::int64_t tick() const { return tick_; }

 private:
  std::int64_t tick_;
};

}  // namespace vilbench
