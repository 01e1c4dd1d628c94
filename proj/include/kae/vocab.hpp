#pragma once

#include <map>
#include <string>
#include <vector>

#include "kae/array.hpp"

namespace kae {

// Character-level vocabulary with SOS/EOS/PAD appended after the sorted
// corpus characters; PAD is always the last id.
class Vocabulary {
 public:
  Vocabulary() = default;
  static Vocabulary build(const std::vector<std::string>& corpus);
  // rebuild from the ordered character list stored in a checkpoint
  static Vocabulary from_chars(const std::string& chars);

  int size() const { return size_; }
  int sos_id() const { return sos_id_; }
  int eos_id() const { return eos_id_; }
  int pad_id() const { return pad_id_; }
  bool has_char(char c) const;
  int id_of(char c) const;
  char char_of(int id) const;
  const std::string& chars() const { return chars_; }

 private:
  std::string chars_;  // sorted corpus characters, specials excluded
  std::map<char, int> char_to_id_;
  int sos_id_ = -1, eos_id_ = -1, pad_id_ = -1, size_ = 0;
};

struct TokenSequence {
  std::vector<int> ids;
  int length = 0;  // non-pad count
};

TokenSequence tokenize(const std::string& s, const Vocabulary& v);
std::string detokenize(const TokenSequence& t, const Vocabulary& v);
std::string detokenize_ids(const std::vector<int>& ids, const Vocabulary& v);

// Pads to width max_len; mask is 1.0 at pad positions, 0.0 elsewhere.
struct PaddedBatch {
  std::vector<int> ids;  // batch*max_len, row-major
  Array pad_mask;        // [batch, max_len]
  int batch = 0;
  int max_len = 0;
};
PaddedBatch pad_batch(const std::vector<TokenSequence>& seqs, int max_len,
                      const Vocabulary& v);

}  // namespace kae
