#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "recon/params.hpp"

namespace recon {

/// An explanatory utterance: a text template plus the parameter values it
/// communicates, and what it costs to say.
struct Message {
  std::string id;
  std::string text;
  std::vector<std::pair<ParamId, double>> params;
  double cost = 1.0;

  bool operator==(const Message&) const = default;
};

/// Bit i set means catalog message i is active. Catalogs hold at most 32
/// messages.
using MessageMask = std::uint32_t;

inline constexpr std::size_t kMaxCatalogSize = 32;

inline bool mask_has(MessageMask mask, std::size_t i) noexcept { return ((mask >> i) & 1U) != 0; }

std::vector<Message> select_messages_by_mask(const std::vector<Message>& catalog, MessageMask mask);

/// Index of the message with the given id, or throws UnknownParam.
std::size_t message_index(const std::vector<Message>& catalog, const std::string& id);

MessageMask mask_from_ids(const std::vector<Message>& catalog, const std::vector<std::string>& ids);

}  // namespace recon
