#include "kvpaxos/messages.hpp"

#include <array>

namespace kvpaxos {

namespace {

constexpr std::array<const char*, kReplyOpcodeCount> kReplyNames = {
    "Ack",        "AckBaseTsStale", "RmwIdCommitted", "RmwIdCommittedNoBcast", "LogTooLow",
    "LogTooHigh", "SeenHigherProp", "SeenHigherAcc",  "SeenLowerAcc",
};

constexpr std::array<const char*, 12> kKindNames = {
    "?",    "Propose",   "Accept", "Reply",    "Commit",     "CommitAck",
    "Read", "ReadReply", "TsRequest", "TsReply", "WriteValue", "WriteAck",
};

}  // namespace

const char* to_string(ReplyOpcode op) {
  const auto i = static_cast<std::size_t>(op);
  return i < kReplyNames.size() ? kReplyNames[i] : "?";
}

ReplyOpcode reply_opcode_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kReplyNames.size(); ++i) {
    if (s == kReplyNames[i]) return static_cast<ReplyOpcode>(i);
  }
  throw std::invalid_argument("unknown reply opcode '" + s + "'");
}

std::size_t expected_payload_index(ReplyOpcode op) {
  switch (op) {
    case ReplyOpcode::SeenHigherProp:
    case ReplyOpcode::SeenHigherAcc: return 1;
    case ReplyOpcode::SeenLowerAcc: return 2;
    case ReplyOpcode::LogTooLow: return 3;
    case ReplyOpcode::AckBaseTsStale: return 4;
    default: return 0;
  }
}

const char* to_string(ReadOpcode op) {
  switch (op) {
    case ReadOpcode::CarstampTooLow: return "CarstampTooLow";
    case ReadOpcode::CarstampEqual: return "CarstampEqual";
    case ReadOpcode::CarstampTooHigh: return "CarstampTooHigh";
  }
  return "?";
}

MsgKind kind_of(const Message& m) { return static_cast<MsgKind>(m.index() + 1); }

const char* to_string(MsgKind k) {
  const auto i = static_cast<std::size_t>(k);
  return i < kKindNames.size() ? kKindNames[i] : "?";
}

MsgKind msg_kind_from_string(const std::string& s) {
  for (std::size_t i = 1; i < kKindNames.size(); ++i) {
    if (s == kKindNames[i]) return static_cast<MsgKind>(i);
  }
  throw std::invalid_argument("unknown message kind '" + s + "'");
}

Lid lid_of(const Message& m) {
  return std::visit([](const auto& x) { return x.lid; }, m);
}

}  // namespace kvpaxos
