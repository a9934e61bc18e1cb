#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace astrl {

enum class Errc {
    DuplicateSpecialNet,
    NetNetEdge,
    ComponentComponentEdge,
    TerminalOccupied,
    IllegalTerminalKind,
    NotAComponent,
    UnregisteredNode,
    EmptyGraph,
    InvalidSource,
    InvalidPrefix,
    MalformedScaffold,
    NonFiniteMeasurement,
    AllMasked,
    InfeasibleAction,
    InfeasibleExpertAction,
    DegenerateClasses,
    ParseError,
    UnsupportedDevice,
    NotASubgraph,
    IncompleteGraph,
    EngineNotConfigured,
    SingularSystem,
    Io,
    Config,
};

constexpr std::string_view errc_name(Errc c) noexcept
{
    switch (c) {
    case Errc::DuplicateSpecialNet: return "DuplicateSpecialNet";
    case Errc::NetNetEdge: return "NetNetEdge";
    case Errc::ComponentComponentEdge: return "ComponentComponentEdge";
    case Errc::TerminalOccupied: return "TerminalOccupied";
    case Errc::IllegalTerminalKind: return "IllegalTerminalKind";
    case Errc::NotAComponent: return "NotAComponent";
    case Errc::UnregisteredNode: return "UnregisteredNode";
    case Errc::EmptyGraph: return "EmptyGraph";
    case Errc::InvalidSource: return "InvalidSource";
    case Errc::InvalidPrefix: return "InvalidPrefix";
    case Errc::MalformedScaffold: return "MalformedScaffold";
    case Errc::NonFiniteMeasurement: return "NonFiniteMeasurement";
    case Errc::AllMasked: return "AllMasked";
    case Errc::InfeasibleAction: return "InfeasibleAction";
    case Errc::InfeasibleExpertAction: return "InfeasibleExpertAction";
    case Errc::DegenerateClasses: return "DegenerateClasses";
    case Errc::ParseError: return "ParseError";
    case Errc::UnsupportedDevice: return "UnsupportedDevice";
    case Errc::NotASubgraph: return "NotASubgraph";
    case Errc::IncompleteGraph: return "IncompleteGraph";
    case Errc::EngineNotConfigured: return "EngineNotConfigured";
    case Errc::SingularSystem: return "SingularSystem";
    case Errc::Io: return "Io";
    case Errc::Config: return "Config";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code)
    {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace astrl
