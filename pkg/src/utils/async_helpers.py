import asyncio
import os
from typing import Dict

import aiofiles


class AsyncFileManager:
    """异步文件管理类，负责并发写出相互独立的产物文件"""

    @staticmethod
    async def async_write_text(file_path: str, content: str) -> bool:
        """异步写出文本文件"""
        directory = os.path.dirname(file_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        async with aiofiles.open(file_path, 'w', encoding='utf-8', newline='\n') as f:
            await f.write(content)
        return True

    @staticmethod
    async def async_write_many(contents: Dict[str, str]) -> int:
        """并发写出多个文件，返回写出的文件数"""
        results = await asyncio.gather(
            *(AsyncFileManager.async_write_text(path, text) for path, text in sorted(contents.items()))
        )
        return sum(1 for ok in results if ok)

    @staticmethod
    def write_many(contents: Dict[str, str]) -> int:
        """同步入口：在新的事件循环中并发写出文件"""
        if not contents:
            return 0
        return asyncio.run(AsyncFileManager.async_write_many(contents))
