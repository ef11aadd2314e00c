#include "knetaudit/selectors.hpp"

#include <algorithm>

namespace knetaudit {

bool matches(const LabelSelector& selector, const LabelSet& labels) {
    if (!selector.present) return false;
    for (const auto& [key, value] : selector.match_labels) {
        auto it = labels.find(key);
        if (it == labels.end() || it->second != value) return false;
    }
    for (const auto& req : selector.match_expressions) {
        auto it = labels.find(req.key);
        bool key_present = it != labels.end();
        switch (req.op) {
            case SelectorOp::In:
                if (!key_present) return false;
                if (std::find(req.values.begin(), req.values.end(), it->second) ==
                    req.values.end())
                    return false;
                break;
            case SelectorOp::NotIn:
                if (key_present && std::find(req.values.begin(), req.values.end(), it->second) !=
                                       req.values.end())
                    return false;
                break;
            case SelectorOp::Exists:
                if (!key_present) return false;
                break;
            case SelectorOp::DoesNotExist:
                if (key_present) return false;
                break;
        }
    }
    return true;
}

std::vector<const ComputeUnit*> select_units(const LabelSelector& selector,
                                             const ApplicationBundle& bundle) {
    std::vector<const ComputeUnit*> out;
    for (const auto& unit : bundle.compute_units)
        if (matches(selector, unit.pod_labels)) out.push_back(&unit);
    std::sort(out.begin(), out.end(),
              [](const ComputeUnit* a, const ComputeUnit* b) { return a->id < b->id; });
    return out;
}

}  // namespace knetaudit
