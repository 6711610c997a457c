#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fintree/data.hpp"
#include "fintree/schema.hpp"

namespace fintree {

// Toy relation data whose gold label is a fixed function of the entity-type pair:
// (org, date) -> org:date:formed_on, (org, gpe) -> org:gpe:headquartered_in,
// (pers, org) -> pers:org:employee_of, (pers, date) -> no_relation.
LabelRegistry synthetic_registry();

struct SyntheticOptions {
    std::size_t min_filler = 3;
    std::size_t max_filler = 8;
    std::string id_prefix = "syn";
};

Dataset make_synthetic(std::size_t count, std::uint64_t seed, Split split = Split::train,
                       const SyntheticOptions& options = {});

// Sentences plus every string the prompt can contain, for building a tokenizer vocabulary.
std::vector<std::string> synthetic_texts(const Dataset& ds);

} // namespace fintree
