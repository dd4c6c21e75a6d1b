#!/usr/bin/env node
// Commands:
//   serve   --mode echo|empty|fixed [--corpus file] [--text s] [--port n]
//   train   --stages s1.jsonl,s2.jsonl,s3.jsonl [--log file]
//   predict --endpoint url --corpus file --out file [--batch-size n]

import { writeFileSync } from 'node:fs';

import { defaultConfig, MockTrainer, predict, trainStages } from './bridge.js';
import { createMockServer, listen, MockMode } from './mock-server.js';

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key?.startsWith('--') || value === undefined) {
      throw new Error(`bad flag pair near ${key ?? '<end>'}`);
    }
    flags.set(key.slice(2), value);
  }
  return flags;
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  const flags = parseFlags(rest);

  if (command === 'serve') {
    const mode = (flags.get('mode') ?? 'empty') as MockMode;
    const server = createMockServer({
      mode,
      corpusPath: flags.get('corpus'),
      fixedText: flags.get('text'),
    });
    const port = await listen(server, Number(flags.get('port') ?? 0));
    // machine-readable so callers can scrape the chosen port
    console.log(`LISTENING ${port}`);
    return new Promise(() => undefined); // runs until killed
  }

  if (command === 'train') {
    const stages = (flags.get('stages') ?? '').split(',').filter(Boolean);
    const config = defaultConfig({ stageFiles: stages });
    const log = await trainStages(config, new MockTrainer());
    const logPath = flags.get('log');
    if (logPath) {
      writeFileSync(logPath, JSON.stringify(log, null, 2) + '\n');
    }
    console.log(`trained ${log.stages.length} stages -> ${log.checkpoint}`);
    return 0;
  }

  if (command === 'predict') {
    const endpoint = flags.get('endpoint');
    const corpus = flags.get('corpus');
    const out = flags.get('out');
    if (!endpoint || !corpus || !out) {
      throw new Error('predict needs --endpoint, --corpus, and --out');
    }
    const config = defaultConfig({
      endpoint,
      batchSize: Number(flags.get('batch-size') ?? 8),
      maxNewTokens: Number(flags.get('max-new-tokens') ?? 1024),
    });
    const rows = await predict(config, corpus, out);
    console.log(`wrote ${rows.length} predictions to ${out}`);
    return 0;
  }

  console.error('usage: cli.js serve|train|predict [flags]');
  return 1;
}

main().then(
  (code) => {
    if (code !== 0) process.exit(code);
  },
  (err) => {
    console.error(String(err));
    process.exit(1);
  },
);
