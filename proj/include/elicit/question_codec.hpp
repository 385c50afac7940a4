#pragma once

#include "elicit/graph_codec.hpp"
#include "elicit/provider.hpp"
#include "elicit/question.hpp"

namespace elicit {

json proposal_to_json(const Proposal& p);
Proposal proposal_from_json(const json& j);

json question_to_json(const Question& q);
Question question_from_json(const json& j);

/// {"selected":[...]} | {"custom":"..."} | {"skip":true}
json response_to_json(const Response& r);
Response response_from_json(const json& j);

/// {"question_id", "response", "revision"}; also accepts the response fields
/// inlined at the top level.
json answer_to_json(const Answer& a);
Answer answer_from_json(const json& j);

json asked_to_json(const AskedQuestion& a);
AskedQuestion asked_from_json(const json& j);

json requirements_to_json(const RequirementsResult& r);
RequirementsResult requirements_from_json(const json& j);

json labels_to_json(const LabelSet& labels);
LabelSet labels_from_json(const json& j);

}  // namespace elicit
