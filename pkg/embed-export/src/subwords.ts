/**
 * Deterministic vocabulary-free subword splitting.
 *
 * Short tokens stay whole; longer tokens are chopped into 3-4 character
 * pieces with a "##" continuation marker, wordpiece style. This gives the
 * subword-to-token alignment problem real multi-subword cases without
 * needing a downloaded vocabulary.
 */
const HEAD = 4;
const PIECE = 3;

export function splitToken(token: string): string[] {
  if (token.length === 0) {
    return [];
  }
  if (token.length <= HEAD) {
    return [token];
  }
  const pieces = [token.slice(0, HEAD)];
  for (let i = HEAD; i < token.length; i += PIECE) {
    pieces.push('##' + token.slice(i, i + PIECE));
  }
  return pieces;
}

export interface TokenAlignment {
  subwords: string[];
  /** spans[i] = [start, end) subword range of token i */
  spans: Array<[number, number]>;
}

export function alignTokens(tokens: string[]): TokenAlignment {
  const subwords: string[] = [];
  const spans: Array<[number, number]> = [];
  for (const token of tokens) {
    const pieces = splitToken(token);
    spans.push([subwords.length, subwords.length + pieces.length]);
    subwords.push(...pieces);
  }
  return { subwords, spans };
}
