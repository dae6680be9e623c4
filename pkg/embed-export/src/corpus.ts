import { Sentence } from './types.js';

/**
 * Parse a BIO file (token<TAB>tag per line, blank line between sentences)
 * or a sentence/episode JSONL stream into plain token sequences.
 *
 * BIO sentences get sequential ids "s0", "s1", ... matching the consumer's
 * convention, so embeddings line up with sentences parsed from the same
 * file on the other side.
 */
export function parseCorpus(text: string): Sentence[] {
  const trimmed = text.trimStart();
  if (trimmed.startsWith('{')) {
    return parseJsonl(text);
  }
  return parseBio(text);
}

export function parseBio(text: string): Sentence[] {
  const sentences: Sentence[] = [];
  let tokens: string[] = [];
  const flush = () => {
    if (tokens.length > 0) {
      sentences.push({ id: `s${sentences.length}`, tokens });
      tokens = [];
    }
  };
  const lines = text.split('\n');
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i];
    if (line.trim() === '') {
      flush();
      continue;
    }
    const parts = line.split('\t');
    if (parts.length !== 2) {
      throw new Error(`line ${i + 1}: expected TOKEN<TAB>TAG, got ${JSON.stringify(line)}`);
    }
    tokens.push(parts[0]);
  }
  flush();
  return sentences;
}

/** Sentence records ({id, tokens, ...}) or episode records with support/queries. */
export function parseJsonl(text: string): Sentence[] {
  const seen = new Map<string, Sentence>();
  for (const line of text.split('\n')) {
    if (line.trim() === '') continue;
    const rec = JSON.parse(line);
    if (Array.isArray(rec.support) || Array.isArray(rec.queries)) {
      for (const sent of [...(rec.support ?? []), ...(rec.queries ?? [])]) {
        if (!seen.has(sent.id)) seen.set(sent.id, { id: sent.id, tokens: sent.tokens });
      }
    } else if (rec.id !== undefined && Array.isArray(rec.tokens)) {
      if (!seen.has(rec.id)) seen.set(rec.id, { id: rec.id, tokens: rec.tokens });
    } else {
      throw new Error(`unrecognized JSONL record: ${line.slice(0, 80)}`);
    }
  }
  return [...seen.values()];
}
