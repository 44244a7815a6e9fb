#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace semtrack {

// Sequence attribute codes used to slice evaluation reports.
enum class AttributeTag { IV, OPR, SV, OCC, DEF, MB, FM, IPR, OV, BC, LR };

inline constexpr AttributeTag kAllAttributes[] = {
    AttributeTag::IV, AttributeTag::OPR, AttributeTag::SV, AttributeTag::OCC,
    AttributeTag::DEF, AttributeTag::MB, AttributeTag::FM, AttributeTag::IPR,
    AttributeTag::OV, AttributeTag::BC, AttributeTag::LR};

std::string_view to_string(AttributeTag tag);
std::optional<AttributeTag> parse_attribute(std::string_view code);

}  // namespace semtrack
