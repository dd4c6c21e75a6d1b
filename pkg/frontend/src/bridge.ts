import { createHash } from 'node:crypto';
import { existsSync, readFileSync } from 'node:fs';

import { CorpusRow, PredictionRow, readCorpus, writeJsonl } from './jsonl.js';

export interface BridgeConfig {
  /** Inference endpoint speaking POST {"prompt"} -> {"output_text"}. */
  endpoint: string;
  /** Stage files, consumed strictly in the given order. */
  stageFiles: string[];
  maxNewTokens: number;
  batchSize: number;
}

export function defaultConfig(partial: Partial<BridgeConfig>): BridgeConfig {
  return {
    endpoint: partial.endpoint ?? 'http://127.0.0.1:8080',
    stageFiles: partial.stageFiles ?? [],
    maxNewTokens: partial.maxNewTokens ?? 1024,
    batchSize: partial.batchSize ?? 8,
  };
}

export function fileChecksum(path: string): string {
  return createHash('sha256').update(readFileSync(path)).digest('hex');
}

export interface StageResult {
  stage: number;
  file: string;
  samples: number;
  losses: number[];
  checksum: string;
}

export interface Trainer {
  /** Train on one stage; returns the per-step loss series. */
  trainStage(stage: number, rows: CorpusRow[]): Promise<number[]>;
}

/**
 * Deterministic stand-in trainer: emits a decreasing loss series derived
 * from the stage content hash. Lets integration tests assert ordering and
 * log shape without a GPU stack.
 */
export class MockTrainer implements Trainer {
  readonly stagesSeen: number[] = [];

  async trainStage(stage: number, rows: CorpusRow[]): Promise<number[]> {
    this.stagesSeen.push(stage);
    const digest = createHash('sha256')
      .update(rows.map((r) => r.id).join(','))
      .digest();
    const start = 2 + (digest[0] ?? 0) / 255;
    const steps = Math.max(4, Math.min(16, rows.length));
    return Array.from({ length: steps }, (_, i) => start * Math.exp(-0.35 * i));
  }
}

export interface TrainLog {
  checkpoint: string;
  stages: StageResult[];
}

/**
 * Consume the stage files strictly in order 1 -> 2 -> 3. All files are
 * checked up front so a missing later stage fails before any training. The
 * bridge never rewrites samples; checksums recorded before and after each
 * stage prove byte pass-through.
 */
export async function trainStages(config: BridgeConfig, trainer: Trainer): Promise<TrainLog> {
  if (config.stageFiles.length === 0) {
    throw new Error('no stage files configured');
  }
  for (const file of config.stageFiles) {
    if (!existsSync(file)) {
      throw new Error(`missing stage file: ${file}`);
    }
  }
  const stages: StageResult[] = [];
  for (const [index, file] of config.stageFiles.entries()) {
    const before = fileChecksum(file);
    const rows = readCorpus(file);
    const losses = await trainer.trainStage(index + 1, rows);
    const after = fileChecksum(file);
    if (before !== after) {
      throw new Error(`stage file changed during training: ${file}`);
    }
    stages.push({ stage: index + 1, file, samples: rows.length, losses, checksum: after });
  }
  const checkpoint = 'ckpt-' + createHash('sha256')
    .update(stages.map((s) => s.checksum).join('+'))
    .digest('hex')
    .slice(0, 12);
  return { checkpoint, stages };
}

async function generateOne(config: BridgeConfig, prompt: string): Promise<string> {
  const response = await fetch(config.endpoint, {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify({ prompt, max_new_tokens: config.maxNewTokens }),
  });
  if (!response.ok) {
    throw new Error(`endpoint returned ${response.status}`);
  }
  const body = (await response.json()) as { output_text?: unknown };
  if (typeof body.output_text !== 'string') {
    throw new Error('endpoint response is missing output_text');
  }
  return body.output_text;
}

/**
 * One prediction per corpus id, batched requests, failures recorded as empty
 * output (scored 0 downstream). The output file is sorted by id, so its
 * bytes do not depend on the batch size.
 */
export async function predict(config: BridgeConfig, corpusPath: string, outPath: string): Promise<PredictionRow[]> {
  const rows = readCorpus(corpusPath);
  const predictions: PredictionRow[] = [];
  for (let i = 0; i < rows.length; i += config.batchSize) {
    const batch = rows.slice(i, i + config.batchSize);
    const outputs = await Promise.all(
      batch.map(async (row) => {
        try {
          return await generateOne(config, row.prompt);
        } catch {
          return '';
        }
      }),
    );
    batch.forEach((row, j) => predictions.push({ id: row.id, output_text: outputs[j] ?? '' }));
  }
  predictions.sort((a, b) => (a.id < b.id ? -1 : a.id > b.id ? 1 : 0));
  writeJsonl(outPath, predictions);
  return predictions;
}
