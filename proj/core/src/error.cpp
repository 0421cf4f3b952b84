#include "nudge/error.hpp"

namespace nudge {

std::string_view to_string(Errc code) {
    switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::NotApplicable: return "NotApplicable";
    case Errc::MissingSlot: return "MissingSlot";
    case Errc::InvalidSlot: return "InvalidSlot";
    case Errc::OutOfOrder: return "OutOfOrder";
    case Errc::OrphanClose: return "OrphanClose";
    case Errc::ItemCountMismatch: return "ItemCountMismatch";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::NoProfile: return "NoProfile";
    case Errc::EmptyBlacklist: return "EmptyBlacklist";
    case Errc::MalformedValue: return "MalformedValue";
    case Errc::WrongState: return "WrongState";
    case Errc::UnknownSession: return "UnknownSession";
    case Errc::UnknownRound: return "UnknownRound";
    case Errc::NoActions: return "NoActions";
    case Errc::UnknownKey: return "UnknownKey";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::CorruptSnapshot: return "CorruptSnapshot";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::Parse: return "Parse";
    case Errc::Io: return "Io";
    }
    return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

} // namespace nudge
