#include "p5rec/prompt/registry.hpp"

namespace p5rec::prompt {

namespace {

// Field glossary:
//   user_id, user_desc     numeric id / display name of the user
//   item_id, item_title    numeric id / title of the item
//   star_rating            rating perturbed onto the 0.1 grid, e.g. "4.3"
//   rating                 original integer rating
//   asked_rating           a proposed integer rating for yes/no questions
//   yes_no, like_dislike   binary answers
//   history, candidates    item lists (rendered as item_<id>)
//   next_item              the item the user interacts with next
//   feature_word, explanation, review_text, summary
constexpr std::string_view kDefaultRegistry = R"REG(# Bundled prompt collection: five task families.
format = p5rec-registry/1

# --- rating --------------------------------------------------------------

[1-1]
family = rating
category = 1
fields = user_id, item_id, star_rating
input = Which star rating will user_{user_id} give item_{item_id} ? ( 1 being lowest and 5 being highest )
target = {star_rating}

[1-2]
family = rating
category = 1
fields = user_id, item_title, star_rating
input = How will user_{user_id} rate this product : {item_title} ? ( 1 being lowest and 5 being highest )
target = {star_rating}

[1-3]
family = rating
category = 2
fields = user_id, item_id, asked_rating, yes_no
input = Will user_{user_id} give item_{item_id} a {asked_rating} -star rating ? ( 1 being lowest and 5 being highest )
target = {yes_no}

[1-4]
family = rating
category = 2
fields = user_id, item_title, asked_rating, yes_no
input = Does user_{user_id} rate {item_title} with {asked_rating} stars ? answer yes or no
target = {yes_no}

[1-5]
family = rating
category = 3
fields = user_id, item_id, like_dislike
input = Does user_{user_id} like or dislike item_{item_id} ?
target = {like_dislike}

[1-6]
family = rating
category = 1
fields = user_id, item_id, item_title, star_rating
input = Predict user_{user_id} 's preference on item_{item_id} ( {item_title} ) -1 -2 -3 -4 -5
target = {star_rating}

[1-7]
family = rating
category = 1
fields = user_desc, item_id, star_rating
input = What star rating will {user_desc} give to item_{item_id} ? ( 1 being lowest and 5 being highest )
target = {star_rating}

[1-8]
family = rating
category = 2
fields = user_desc, item_id, asked_rating, yes_no
input = Would {user_desc} give a {asked_rating} -star rating to item_{item_id} ? answer yes or no
target = {yes_no}

[1-9]
family = rating
category = 3
fields = user_desc, item_title, like_dislike
input = Will {user_desc} like or dislike this product : {item_title} ?
target = {like_dislike}

[1-10]
family = rating
category = 1
fields = user_desc, item_id, star_rating
input = What star rating do you think {user_desc} will give item_{item_id} ? ( 1 being lowest and 5 being highest )
target = {star_rating}

# --- sequential ----------------------------------------------------------

[2-1]
family = sequential
category = 1
fields = user_id, history, next_item
input = Given the following purchase history of user_{user_id} : {history} predict next possible item to be purchased by the user ?
target = item_{next_item}

[2-2]
family = sequential
category = 1
fields = user_id, history, next_item
input = I find the purchase history list of user_{user_id} : {history} I wonder what is the next item to recommend to the user ?
target = item_{next_item}

[2-3]
family = sequential
category = 1
fields = user_id, history, next_item
input = Here is the purchase history list of user_{user_id} : {history} try to recommend next item to the user
target = item_{next_item}

[2-4]
family = sequential
category = 1
fields = user_desc, history, next_item
input = Given the following purchase history of {user_desc} : {history} predict next possible item for the user
target = item_{next_item}

[2-5]
family = sequential
category = 1
fields = user_desc, history, next_item
input = Based on the purchase history of {user_desc} : {history} can you decide the next item likely to be purchased by the user ?
target = item_{next_item}

[2-6]
family = sequential
category = 1
fields = user_id, history, next_item
input = user_{user_id} has purchased the following items : {history} what else do you think is necessary for the user ?
target = item_{next_item}

[2-7]
family = sequential
category = 2
fields = user_id, history, candidates, next_item
input = Here is the purchase history of user_{user_id} : {history} select the next possible item likely to be purchased by the user from the following candidates : {candidates}
target = item_{next_item}

[2-8]
family = sequential
category = 2
fields = user_id, history, candidates, next_item
input = Given the following purchase history of user_{user_id} : {history} what to recommend next for the user ? select one from the following items : {candidates}
target = item_{next_item}

[2-9]
family = sequential
category = 2
fields = user_desc, history, candidates, next_item
input = Based on the purchase history of {user_desc} : {history} choose the next item from these candidates : {candidates}
target = item_{next_item}

[2-10]
family = sequential
category = 2
fields = user_desc, history, candidates, next_item
input = {user_desc} has purchased : {history} pick the item the user will buy next from : {candidates}
target = item_{next_item}

[2-11]
family = sequential
category = 3
fields = user_id, history, item_id, yes_no
input = user_{user_id} has the following purchase history : {history} does the user likely to buy item_{item_id} next ?
target = {yes_no}

[2-12]
family = sequential
category = 3
fields = user_desc, history, item_id, yes_no
input = According to the purchase history of {user_desc} : {history} will the user interact with item_{item_id} next ?
target = {yes_no}

[2-13]
family = sequential
category = 1
fields = user_id, history, next_item
input = According to the purchase history of user_{user_id} : {history} can you recommend the next possible item to the user ?
target = item_{next_item}

# --- explanation ---------------------------------------------------------

[3-1]
family = explanation
category = 1
fields = user_id, item_id, rating, explanation
input = Generate an explanation for user_{user_id} about this product : item_{item_id} with a rating of {rating}
target = {explanation}

[3-2]
family = explanation
category = 1
fields = user_id, item_title, explanation
input = Help user_{user_id} generate a {item_title} review explanation
target = {explanation}

[3-3]
family = explanation
category = 1
fields = user_id, item_id, explanation
input = Generate an explanation for user_{user_id} about this product : item_{item_id}
target = {explanation}

[3-4]
family = explanation
category = 1
fields = user_desc, item_title, rating, explanation
input = Help {user_desc} explain the {rating} -star rating of {item_title}
target = {explanation}

[3-5]
family = explanation
category = 1
fields = user_id, item_id, summary, explanation
input = user_{user_id} wrote the title " {summary} " for item_{item_id} , explain the preference
target = {explanation}

[3-6]
family = explanation
category = 1
fields = user_desc, item_id, rating, summary, explanation
input = {user_desc} rated item_{item_id} {rating} stars with title " {summary} " , generate an explanation
target = {explanation}

[3-7]
family = explanation
category = 1
fields = user_desc, item_id, explanation
input = Why would {user_desc} have this opinion about item_{item_id} ? explain
target = {explanation}

[3-8]
family = explanation
category = 2
fields = user_id, item_id, feature_word, explanation
input = Generate an explanation for user_{user_id} about item_{item_id} based on the feature word {feature_word}
target = {explanation}

[3-9]
family = explanation
category = 2
fields = user_id, item_title, feature_word, explanation
input = Based on the feature word {feature_word} , generate an explanation for user_{user_id} about this product : {item_title}
target = {explanation}

[3-10]
family = explanation
category = 2
fields = user_desc, item_id, rating, feature_word, explanation
input = {user_desc} gave item_{item_id} {rating} stars , explain it with the feature word {feature_word}
target = {explanation}

[3-11]
family = explanation
category = 2
fields = user_desc, item_title, feature_word, explanation
input = Write an explanation for {user_desc} about {item_title} mentioning {feature_word}
target = {explanation}

[3-12]
family = explanation
category = 2
fields = user_desc, item_id, feature_word, explanation
input = Can you help generate an explanation of {user_desc} for item_{item_id} based on the feature word {feature_word} ?
target = {explanation}

# --- review --------------------------------------------------------------

[4-1]
family = review
category = 1
fields = review_text, summary
input = Write a short sentence to summarize the following product review : {review_text}
target = {summary}

[4-2]
family = review
category = 2
fields = user_id, review_text, star_rating
input = Given the following review written by user_{user_id} : {review_text} can you predict the associated star rating ( 1 being lowest and 5 being highest ) ?
target = {star_rating}

[4-3]
family = review
category = 1
fields = user_desc, review_text, summary
input = Give a short title for the review of {user_desc} : {review_text}
target = {summary}

[4-4]
family = review
category = 2
fields = user_desc, review_text, star_rating
input = According to the following review written by {user_desc} : {review_text} predict the star rating ( 1 being lowest and 5 being highest )
target = {star_rating}

# --- direct --------------------------------------------------------------

[5-1]
family = direct
category = 1
fields = user_id, item_id, yes_no
input = Will user_{user_id} likely to interact with item_{item_id} ?
target = {yes_no}

[5-2]
family = direct
category = 1
fields = user_desc, item_id, yes_no
input = Shall we recommend item_{item_id} to {user_desc} ?
target = {yes_no}

[5-3]
family = direct
category = 1
fields = user_id, item_title, yes_no
input = For user_{user_id} , do you think it is good to recommend {item_title} ?
target = {yes_no}

[5-4]
family = direct
category = 1
fields = user_desc, item_id, yes_no
input = Should {user_desc} be shown item_{item_id} ? answer yes or no
target = {yes_no}

[5-5]
family = direct
category = 2
fields = user_id, candidates, next_item
input = Which item of the following to recommend for user_{user_id} ? {candidates}
target = item_{next_item}

[5-6]
family = direct
category = 2
fields = user_desc, candidates, next_item
input = Choose the best item from the candidates to recommend for {user_desc} ? {candidates}
target = item_{next_item}

[5-7]
family = direct
category = 2
fields = user_id, candidates, next_item
input = Pick the most suitable item from the following list and recommend to user_{user_id} : {candidates}
target = item_{next_item}

[5-8]
family = direct
category = 2
fields = user_desc, candidates, next_item
input = We want to make recommendation for {user_desc} . select the best item from these candidates : {candidates}
target = item_{next_item}
)REG";

}  // namespace

std::string_view default_registry_text() { return kDefaultRegistry; }

const Registry& default_registry() {
  static const Registry registry = load_registry(kDefaultRegistry);
  return registry;
}

}  // namespace p5rec::prompt
