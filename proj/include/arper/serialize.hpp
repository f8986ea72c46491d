#ifndef ARPER_SERIALIZE_HPP
#define ARPER_SERIALIZE_HPP

#include <string>

#include "arper/exemplar.hpp"
#include "arper/model.hpp"
#include "arper/regularizer.hpp"

namespace arper {

// Self-describing JSON checkpoint (config + flat theta). Round-trips
// bit-exactly.
void save_checkpoint(const ModelParams& model, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// Exemplar stores use the corpus JSONL record schema plus task_id and
// u_score fields, in list order.
void save_exemplar_store(const ExemplarStore& store, const TaskStream& stream,
                         const std::string& path);
ExemplarStore load_exemplar_store(const std::string& path, std::size_t budget);

// Anchor (previous parameters + Fisher diagonal) for run resumption.
void save_anchor(const EwcAnchor& anchor, const std::string& path);
EwcAnchor load_anchor(const std::string& path);

}  // namespace arper

#endif
