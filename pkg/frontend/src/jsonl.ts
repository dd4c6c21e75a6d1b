import { readFileSync, writeFileSync } from 'node:fs';

export interface CorpusRow {
  id: string;
  prompt: string;
  completion: string;
  [key: string]: unknown;
}

export interface PredictionRow {
  id: string;
  output_text: string;
}

export function readJsonl<T>(path: string): T[] {
  const text = readFileSync(path, 'utf-8');
  const rows: T[] = [];
  for (const [index, line] of text.split('\n').entries()) {
    if (!line.trim()) continue;
    try {
      rows.push(JSON.parse(line) as T);
    } catch (err) {
      throw new Error(`${path}:${index + 1}: invalid JSON line (${err})`);
    }
  }
  return rows;
}

export function readCorpus(path: string): CorpusRow[] {
  const rows = readJsonl<CorpusRow>(path);
  for (const [i, row] of rows.entries()) {
    if (typeof row.id !== 'string' || typeof row.prompt !== 'string' || typeof row.completion !== 'string') {
      throw new Error(`${path}: row ${i + 1} is missing id/prompt/completion`);
    }
  }
  return rows;
}

export function writeJsonl(path: string, rows: unknown[]): void {
  const text = rows.map((r) => JSON.stringify(r)).join('\n');
  writeFileSync(path, rows.length ? text + '\n' : '');
}
