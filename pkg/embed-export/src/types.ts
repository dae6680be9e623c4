export interface Sentence {
  id: string;
  tokens: string[];
}

/** One line of the embedding interchange JSONL. */
export interface ExportRecord {
  id: string;
  tokens: string[];
  dim: number;
  vectors: number[][];
}

export type Pooling = 'first' | 'mean';

/** A frozen encoder: deterministic subword vectors of a fixed width. */
export interface Encoder {
  readonly name: string;
  readonly dim: number;
  encode(subwords: string[]): Promise<number[][]>;
}
