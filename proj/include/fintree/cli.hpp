#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fintree/config.hpp"
#include "fintree/data.hpp"
#include "fintree/modeling.hpp"
#include "fintree/schema.hpp"

namespace fintree {

// args excludes the program name: args[0] is the subcommand.
// Returns 0 on success, 1 on a runtime failure, 2 on a usage or config error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string usage();

// Fresh model for fine-tuning. With train.use_fp_checkpoint set, the tokenizer
// and backbone come from that pretraining directory and the vocabulary is
// extended with the training words; otherwise both are built from scratch.
RelationModel build_model(const RunConfig& run, const TrainConfig& train_cfg, const Dataset& train,
                          const LabelRegistry& registry);

} // namespace fintree
