import { alignTokens } from './subwords.js';
import { Encoder, ExportRecord, Pooling, Sentence } from './types.js';

export interface ExportResult {
  records: ExportRecord[];
  /** sentences skipped because subwords could not be aligned to tokens */
  skipped: Array<{ id: string; reason: string }>;
}

/** Nearest-float32 value, so serialized decimals carry 32-bit precision. */
function round32(v: number): number {
  return Math.fround(v);
}

function poolSpan(vectors: number[][], start: number, end: number,
                  pooling: Pooling): number[] {
  if (pooling === 'first') {
    return vectors[start];
  }
  const dim = vectors[start].length;
  const out = new Array<number>(dim).fill(0);
  for (let i = start; i < end; i++) {
    for (let j = 0; j < dim; j++) {
      out[j] += vectors[i][j];
    }
  }
  return out.map((v) => v / (end - start));
}

export async function exportSentences(sentences: Sentence[], encoder: Encoder,
                                      pooling: Pooling,
                                      warn: (msg: string) => void = () => {}):
    Promise<ExportResult> {
  const records: ExportRecord[] = [];
  const skipped: ExportResult['skipped'] = [];
  for (const sentence of sentences) {
    const { subwords, spans } = alignTokens(sentence.tokens);
    const empty = spans.findIndex(([s, e]) => e <= s);
    if (sentence.tokens.length === 0 || empty >= 0) {
      const reason = sentence.tokens.length === 0
        ? 'sentence has no tokens'
        : `token ${empty} (${JSON.stringify(sentence.tokens[empty])}) produced no subwords`;
      warn(`skipping ${sentence.id}: ${reason}`);
      skipped.push({ id: sentence.id, reason });
      continue;
    }
    const subwordVectors = await encoder.encode(subwords);
    if (subwordVectors.length !== subwords.length) {
      const reason = `encoder returned ${subwordVectors.length} vectors for ` +
        `${subwords.length} subwords`;
      warn(`skipping ${sentence.id}: ${reason}`);
      skipped.push({ id: sentence.id, reason });
      continue;
    }
    const vectors = spans.map(([s, e]) =>
      poolSpan(subwordVectors, s, e, pooling).map(round32));
    records.push({
      id: sentence.id,
      tokens: sentence.tokens,
      dim: encoder.dim,
      vectors,
    });
  }
  return { records, skipped };
}

export function toJsonl(records: ExportRecord[]): string {
  return records.map((r) => JSON.stringify(r)).join('\n') + (records.length ? '\n' : '');
}
