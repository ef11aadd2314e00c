#pragma once

#include "knetaudit/model.hpp"

namespace knetaudit {

// Kubernetes selector semantics: an absent selector matches nothing, a
// present-but-empty selector matches everything.
bool matches(const LabelSelector& selector, const LabelSet& labels);

// All units of the bundle whose pod_labels match, ordered by unit id.
std::vector<const ComputeUnit*> select_units(const LabelSelector& selector,
                                             const ApplicationBundle& bundle);

}  // namespace knetaudit
