#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "couplesim/engine/types.hpp"

namespace couplesim::gateway {

enum class RequestKind { Completion, Classification };

struct GatewayRequest {
  RequestKind kind = RequestKind::Completion;
  std::string system;  // optional system message
  std::string prompt;
  std::vector<std::string> label_set;  // Classification only
  int max_tokens = 256;
  double temperature = 0.7;
  // Free-form tag ("stage", "speaker", "agent", "judge_role", ...). Backends
  // may ignore it; the scripted backend routes on it.
  std::string purpose;
};

struct GatewayResponse {
  std::string text;
  std::int64_t latency_ms = 0;
  std::string backend_id;
  // A backend may tag the emotion it rendered; the engine otherwise uses the
  // stage table.
  std::optional<Emotion> emotion_override;
};

class GatewayError : public std::runtime_error {
 public:
  enum class Kind { Timeout, BackendUnavailable, Empty, Unmatched, Malformed };

  GatewayError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string_view to_string(GatewayError::Kind k);

// Backend interface. Implementations must be safe for concurrent send().
class ModelGateway {
 public:
  virtual ~ModelGateway() = default;
  virtual GatewayResponse send(const GatewayRequest& request) = 0;
  virtual std::string backend_id() const = 0;
  // True when identical request sequences produce identical responses.
  virtual bool deterministic() const = 0;
};

// Lowercase, trim, and drop everything that is not a letter or digit.
std::string normalize_label(std::string_view raw);

// Maps raw model text onto the label set: exact match, then case-insensitive,
// then normalized, then a unique (stem) substring. std::nullopt when nothing
// matches or the substring step is ambiguous.
std::optional<std::string> match_label(std::string_view raw, std::span<const std::string> label_set);

// Sends a classification request (temperature 0) and salvages the answer.
// Throws GatewayError: Timeout / BackendUnavailable from the backend,
// Unmatched when salvage fails. The result is always a member of label_set.
std::string classify(ModelGateway& gw, const std::string& prompt, std::span<const std::string> label_set,
                     std::string purpose = {});

struct CompleteOptions {
  std::size_t max_chars = 1200;
  std::string fallback_line = "Okay.";
  int max_tokens = 256;
  double temperature = 0.7;
  std::string purpose;
};

// Completion with one retry on empty output, then fallback_line. Timeout and
// BackendUnavailable propagate. Output is trimmed and capped at max_chars.
GatewayResponse complete(ModelGateway& gw, const std::string& system, const std::string& prompt,
                         const CompleteOptions& opts = {});

}  // namespace couplesim::gateway
