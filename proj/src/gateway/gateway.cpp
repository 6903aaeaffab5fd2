#include "couplesim/gateway/gateway.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "couplesim/util/text.hpp"

namespace couplesim::gateway {
namespace {

std::string stem(std::string norm) {
  static constexpr std::array<std::string_view, 5> kSuffixes = {"ation", "ment", "ing", "ion", "s"};
  for (auto suf : kSuffixes) {
    if (norm.size() >= suf.size() + 4 && norm.compare(norm.size() - suf.size(), suf.size(), suf) == 0) {
      norm.resize(norm.size() - suf.size());
      break;
    }
  }
  return norm;
}

struct Span {
  std::size_t begin, end;
  bool inside(const Span& o) const {
    return o.begin <= begin && end <= o.end && (o.end - o.begin) > (end - begin);
  }
};

std::string utf8_truncate(std::string s, std::size_t max_bytes) {
  if (s.size() <= max_bytes) return s;
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  s.resize(cut);
  return s;
}

}  // namespace

std::string_view to_string(GatewayError::Kind k) {
  switch (k) {
    case GatewayError::Kind::Timeout: return "Timeout";
    case GatewayError::Kind::BackendUnavailable: return "BackendUnavailable";
    case GatewayError::Kind::Empty: return "Empty";
    case GatewayError::Kind::Unmatched: return "Unmatched";
    case GatewayError::Kind::Malformed: return "Malformed";
  }
  return "?";
}

std::string normalize_label(std::string_view raw) {
  std::string out;
  for (char c : raw) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) out.push_back(static_cast<char>(std::tolower(u)));
  }
  return out;
}

std::optional<std::string> match_label(std::string_view raw, std::span<const std::string> label_set) {
  const auto trimmed = util::trim(raw);
  for (const auto& l : label_set)
    if (l == trimmed) return l;
  const auto lowered = util::to_lower(trimmed);
  for (const auto& l : label_set)
    if (util::to_lower(l) == lowered) return l;
  const auto norm = normalize_label(trimmed);
  if (norm.empty()) return std::nullopt;
  for (const auto& l : label_set)
    if (normalize_label(l) == norm) return l;

  // Stem substring salvage. A candidate survives when at least one of its
  // matches is not strictly nested inside another candidate's match, so
  // "deescalating" picks De-Escalation over Escalation.
  struct Candidate {
    const std::string* label;
    std::vector<Span> spans;
  };
  std::vector<Candidate> cands;
  for (const auto& l : label_set) {
    auto key = stem(normalize_label(l));
    if (key.empty()) continue;
    Candidate c{&l, {}};
    for (auto pos = norm.find(key); pos != std::string::npos; pos = norm.find(key, pos + 1))
      c.spans.push_back({pos, pos + key.size()});
    if (!c.spans.empty()) cands.push_back(std::move(c));
  }
  std::vector<const std::string*> survivors;
  for (const auto& c : cands) {
    bool free_span = std::any_of(c.spans.begin(), c.spans.end(), [&](const Span& s) {
      return std::none_of(cands.begin(), cands.end(), [&](const Candidate& o) {
        return o.label != c.label &&
               std::any_of(o.spans.begin(), o.spans.end(), [&](const Span& os) { return s.inside(os); });
      });
    });
    if (free_span) survivors.push_back(c.label);
  }
  if (survivors.size() == 1) return *survivors.front();
  return std::nullopt;
}

std::string classify(ModelGateway& gw, const std::string& prompt, std::span<const std::string> label_set,
                     std::string purpose) {
  if (label_set.empty()) throw std::invalid_argument("classify: empty label set");
  GatewayRequest req;
  req.kind = RequestKind::Classification;
  req.prompt = prompt;
  req.label_set.assign(label_set.begin(), label_set.end());
  req.temperature = 0.0;
  req.max_tokens = 16;
  req.purpose = std::move(purpose);
  auto resp = gw.send(req);
  if (auto label = match_label(resp.text, label_set)) return *label;
  throw GatewayError(GatewayError::Kind::Unmatched,
                     "classifier output '" + std::string(util::trim(resp.text)) + "' matches no label");
}

GatewayResponse complete(ModelGateway& gw, const std::string& system, const std::string& prompt,
                         const CompleteOptions& opts) {
  if (prompt.empty()) throw std::invalid_argument("complete: empty prompt");
  GatewayRequest req;
  req.kind = RequestKind::Completion;
  req.system = system;
  req.prompt = prompt;
  req.max_tokens = opts.max_tokens;
  req.temperature = opts.temperature;
  req.purpose = opts.purpose;

  GatewayResponse resp;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      resp = gw.send(req);
    } catch (const GatewayError& e) {
      if (e.kind() != GatewayError::Kind::Empty) throw;
      resp = GatewayResponse{};
    }
    auto text = std::string(util::trim(resp.text));
    if (!text.empty()) {
      resp.text = utf8_truncate(std::move(text), opts.max_chars);
      return resp;
    }
  }
  resp.text = opts.fallback_line;
  resp.emotion_override.reset();
  if (resp.backend_id.empty()) resp.backend_id = gw.backend_id();
  return resp;
}

}  // namespace couplesim::gateway
