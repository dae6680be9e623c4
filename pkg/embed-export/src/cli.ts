#!/usr/bin/env node
import { readFileSync, writeFileSync } from 'node:fs';
import { pathToFileURL } from 'node:url';

import { parseCorpus } from './corpus.js';
import { resolveEncoder } from './encoder.js';
import { exportSentences, toJsonl } from './exporter.js';
import { Pooling } from './types.js';

const USAGE = `usage: embed-export --input FILE --out FILE [options]

Runs a frozen encoder over a BIO or sentence/episode JSONL corpus and
writes the token-embedding interchange JSONL.

options:
  --input FILE          BIO (token<TAB>tag) or JSONL corpus
  --out FILE            output interchange JSONL
  --encoder-name NAME   encoder id; built-in: hash-<dim> (default hash-32)
  --pooling MODE        subword-to-token pooling: first | mean (default first)
  --seed N              built-in encoder seed (default 0)
`;

interface Args {
  input: string;
  out: string;
  encoderName: string;
  pooling: Pooling;
  seed: number;
}

export function parseArgs(argv: string[]): Args {
  const args: Partial<Args> = { encoderName: 'hash-32', pooling: 'first', seed: 0 };
  for (let i = 0; i < argv.length; i++) {
    const next = () => {
      if (i + 1 >= argv.length) throw new Error(`missing value for ${argv[i]}`);
      return argv[++i];
    };
    switch (argv[i]) {
      case '--input': args.input = next(); break;
      case '--out': args.out = next(); break;
      case '--encoder-name': args.encoderName = next(); break;
      case '--pooling': {
        const value = next();
        if (value !== 'first' && value !== 'mean') {
          throw new Error(`--pooling must be first or mean, got ${value}`);
        }
        args.pooling = value;
        break;
      }
      case '--seed': args.seed = parseInt(next(), 10); break;
      case '--help': case '-h':
        process.stdout.write(USAGE);
        process.exit(0);
        break;
      default:
        throw new Error(`unknown flag ${argv[i]}`);
    }
  }
  if (!args.input || !args.out) {
    throw new Error('--input and --out are required');
  }
  return args as Args;
}

export async function run(argv: string[]): Promise<number> {
  const args = parseArgs(argv);
  const sentences = parseCorpus(readFileSync(args.input, 'utf-8'));
  const encoder = resolveEncoder(args.encoderName, args.seed);
  const { records, skipped } = await exportSentences(
    sentences, encoder, args.pooling,
    (msg) => process.stderr.write(`warning: ${msg}\n`));
  writeFileSync(args.out, toJsonl(records), 'utf-8');
  process.stdout.write(
    `wrote ${records.length} records (dim ${encoder.dim}, pooling ${args.pooling})` +
    (skipped.length ? `, skipped ${skipped.length}` : '') + '\n');
  return 0;
}

const isMain = process.argv[1] !== undefined &&
  import.meta.url === pathToFileURL(process.argv[1]).href;
if (isMain) {
  run(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      process.stderr.write(`error: ${err.message}\n${USAGE}`);
      process.exit(1);
    });
}
