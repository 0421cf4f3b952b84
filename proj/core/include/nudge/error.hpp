#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nudge {

enum class Errc {
    InvalidArgument,
    NotApplicable,
    MissingSlot,
    InvalidSlot,
    OutOfOrder,
    OrphanClose,
    ItemCountMismatch,
    OutOfRange,
    NoProfile,
    EmptyBlacklist,
    MalformedValue,
    WrongState,
    UnknownSession,
    UnknownRound,
    NoActions,
    UnknownKey,
    SchemaMismatch,
    CorruptSnapshot,
    InvalidConfig,
    Parse,
    Io,
};

std::string_view to_string(Errc code);

// Every failure raised by the library carries one of the codes above so that
// callers (notably the HTTP layer) can map it without string matching.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message);

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace nudge
