"""Tour of the data layer: tokenization, emoji sentiment, vocabulary, and
the deterministic synthetic corpus.

Run: python3 demos/01_corpus_tour.py
"""

from sentigen import (
    SentimentLabel,
    build_vocabulary,
    generate_synthetic_corpus,
    load_emoji_table,
    map_emoji_to_sentiment,
    tokenize,
)

print("== tokenization ==")
for text in ["How was the movie?", "never got 42 of them", "I'm SO happy!!"]:
    print(f"  {text!r:35} -> {tokenize(text)}")

print("\n== emoji sentiment (bundled table) ==")
table = load_emoji_table()
for emoji in ["😂", "😡", "🙌", "💔", "🗿"]:
    label = map_emoji_to_sentiment(emoji, table)
    print(f"  {emoji} -> {label if label else 'unresolved (not in table)'}")

print("\n== vocabulary ==")
vocab = build_vocabulary([["the", "movie", "movie", "was", "great"]], max_size=20)
print(f"  size {len(vocab)}, first ids: {vocab.id_to_token[:8]}")
print(f"  encode('the movie was great') -> {vocab.encode(tokenize('the movie was great'))}")
print(f"  unknown word -> {vocab.encode(['zebra'])}")

print("\n== synthetic verification corpus ==")
corpus = generate_synthetic_corpus(seed=7, n_pairs=2000)
stats = corpus.stats
print(f"  vocab {len(corpus.vocab)} tokens; "
      f"train/dev/test = {stats['train']['n_examples']}/{stats['dev']['n_examples']}/{stats['test']['n_examples']}")
print(f"  positive:negative ratio = {stats['overall']['ratio']:.2f}")
ex = corpus.train[0]
print(f"  example: history={corpus.vocab.text(ex.history.tokens)!r}")
print(f"           response={corpus.vocab.text(ex.response.tokens)!r} label={ex.label}")
print("  (the response lexicon is a deterministic function of topic and label,")
print("   which is what makes desk-scale controllability checks meaningful)")
